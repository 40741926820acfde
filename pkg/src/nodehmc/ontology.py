"""Minimal reader for OBO-style ontology files.

Only ``[Term]`` stanzas and their ``id``, ``is_a`` and ``is_obsolete`` tags
are interpreted; other stanza types and relationship kinds are ignored.
"""
from .errors import HierarchyError
from .hierarchy import Hierarchy


def _value(line):
    # drop trailing "! comment" and "{qualifiers}"
    v = line.split(":", 1)[1]
    v = v.split("!", 1)[0]
    v = v.split("{", 1)[0]
    return v.strip()


def _stanzas(text):
    kind, tags = None, []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("!"):
            continue
        if line.startswith("[") and line.endswith("]"):
            if kind is not None:
                yield kind, tags
            kind, tags = line[1:-1].strip(), []
        elif kind is not None and ":" in line:
            tags.append((line.split(":", 1)[0].strip(), _value(line)))
    if kind is not None:
        yield kind, tags


def parse_obo_lite(text):
    """Build a :class:`Hierarchy` from OBO text; ``is_a: X`` yields the edge X -> term.

    Obsolete terms are dropped along with every ``is_a`` edge touching them.
    A reference to an id that no stanza declares is an error.
    """
    terms = {}
    obsolete = set()
    for kind, tags in _stanzas(text):
        if kind != "Term":
            continue
        ids = [v for k, v in tags if k == "id"]
        if len(ids) != 1 or not ids[0]:
            raise HierarchyError(f"[Term] stanza needs exactly one id, found {len(ids)}")
        tid = ids[0]
        if tid in terms or tid in obsolete:
            raise HierarchyError(f"duplicate term id {tid!r}")
        if any(k == "is_obsolete" and v.lower() == "true" for k, v in tags):
            obsolete.add(tid)
            continue
        terms[tid] = [v for k, v in tags if k == "is_a"]

    dangling = sorted({(p, t) for t, ps in terms.items() for p in ps if p not in terms and p not in obsolete})
    if dangling:
        shown = ", ".join(f"{t} is_a {p}" for p, t in dangling[:10])
        raise HierarchyError(f"{len(dangling)} is_a reference(s) to undeclared terms: {shown}")
    edges = sorted({(p, t) for t, ps in terms.items() for p in ps if p in terms})
    return Hierarchy(sorted(terms), edges)


def read_obo(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_obo_lite(text)
    except HierarchyError as exc:
        raise HierarchyError(f"{path}: {exc}") from None
