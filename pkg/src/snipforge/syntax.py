"""Shared access to the error-tolerant Python grammar."""

import logging
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import tree_sitter_python as tspython
from tree_sitter import Language, Node, Parser, Tree

logger = logging.getLogger(__name__)

_local = threading.local()

DEFINITION_TYPES = ("function_definition",)
SCOPE_TYPES = ("function_definition", "class_definition")


@lru_cache(maxsize=1)
def get_language() -> Language:
    language = Language(tspython.language())
    logger.debug("Loaded tree-sitter grammar for Python (ABI %s)", getattr(language, "abi_version", "?"))
    return language


def get_parser() -> Parser:
    """Return this thread's parser (parsers are not shared between threads)."""
    parser = getattr(_local, "parser", None)
    if parser is None:
        parser = Parser(get_language())
        _local.parser = parser
    return parser


def parse(code: str | bytes) -> Tree:
    if isinstance(code, str):
        code = code.encode("utf-8")
    return get_parser().parse(code)


def grammar_version() -> str:
    """Version label of the bundled grammar, recorded in run manifests."""
    try:
        from importlib.metadata import version

        return f"tree-sitter-python {version('tree-sitter-python')}"
    except Exception:
        return "tree-sitter-python unknown"


def node_text(node: Node) -> str:
    return node.text.decode("utf-8", errors="replace") if node.text is not None else ""


@dataclass(frozen=True)
class Definition:
    """A function or method definition found in a file."""

    qualified_name: str
    node: Node

    @property
    def start_row(self) -> int:
        return self.node.start_point[0]

    @property
    def end_row(self) -> int:
        return self.node.end_point[0]

    @property
    def header_colon(self) -> Node | None:
        """The ':' that closes the def header."""
        for child in self.node.children:
            if child.type == ":":
                return child
        return None


def iter_definitions(root: Node) -> Iterator[Definition]:
    """Yield every function definition with its dotted class/function scope, in source order."""

    def _walk(node: Node, scope: tuple[str, ...]) -> Iterator[Definition]:
        for child in node.named_children:
            if child.type in SCOPE_TYPES:
                name_node = child.child_by_field_name("name")
                if name_node is None:
                    yield from _walk(child, scope)
                    continue
                inner_scope = (*scope, node_text(name_node))
                if child.type in DEFINITION_TYPES:
                    yield Definition(qualified_name=".".join(inner_scope), node=child)
                yield from _walk(child, inner_scope)
            else:
                yield from _walk(child, scope)

    yield from _walk(root, ())


def first_definition(root: Node) -> Node | None:
    """The first function definition directly at the root (decorators allowed)."""
    for child in root.named_children:
        if child.type == "function_definition":
            return child
        if child.type == "decorated_definition":
            inner = child.child_by_field_name("definition")
            if inner is not None and inner.type == "function_definition":
                return inner
    return None


def iter_named_nodes(root: Node) -> Iterator[tuple[Node, int]]:
    """Yield (node, depth) for every named node, root at depth 1."""
    stack = [(root, 1)]
    while stack:
        node, depth = stack.pop()
        yield node, depth
        for child in reversed(node.named_children):
            stack.append((child, depth + 1))


def iter_all_nodes(root: Node) -> Iterator[Node]:
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))
