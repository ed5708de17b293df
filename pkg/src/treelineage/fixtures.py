"""Named example queries used by the CLI report command and the test suite."""

from __future__ import annotations

from .query import UcqNeq, parse_query


def gaifman_path2_text(relation: str = "R") -> str:
    """Two distinct kept facts forming a length-2 path in the Gaifman graph.

    All four direction combinations of two binary facts sharing the middle
    element, with the endpoints forced distinct.
    """
    r = relation
    return (
        f"{r}(x,y) & {r}(y,z) & x!=z | "
        f"{r}(x,y) & {r}(z,y) & x!=z | "
        f"{r}(y,x) & {r}(y,z) & x!=z | "
        f"{r}(y,x) & {r}(z,y) & x!=z"
    )


def gaifman_path2(relation: str = "R") -> UcqNeq:
    return parse_query(gaifman_path2_text(relation))


def threshold2_text(relation: str = "R") -> str:
    """At least two distinct kept facts of a unary relation."""
    return f"{relation}(x) & {relation}(y) & x!=y"


def threshold2(relation: str = "R") -> UcqNeq:
    return parse_query(threshold2_text(relation))


NAMED_QUERIES = {
    "qp": gaifman_path2_text(),
    "threshold2": threshold2_text(),
}


def resolve_query_text(text: str) -> str:
    """Map a well-known name to its query text, else return the text as is."""
    return NAMED_QUERIES.get(text, text)
