"""Documentation, syntax and software-metric features of mined methods."""

import hashlib
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Protocol

from tokenizers import Tokenizer, models, pre_tokenizers
from tree_sitter import Node

from snipforge import constants
from snipforge.config import FeatureConfig
from snipforge.errors import DetectorUnavailable, VocabMissing
from snipforge.models import (
    EMPTY_PROFILE,
    UNDETERMINED,
    DataPoint,
    LanguageTag,
    LexicalProfile,
    RawSnippet,
    SyntaxSummary,
)
from snipforge.syntax import iter_all_nodes, iter_named_nodes, node_text, parse
from snipforge.utils import WHITESPACE_CHARS, dedent_from_first_line, split_words

logger = logging.getLogger(__name__)

# Node types that each add one independent path through a method
DECISION_NODE_TYPES = frozenset(
    {
        "if_statement",
        "elif_clause",
        "for_statement",
        "while_statement",
        "boolean_operator",
        "conditional_expression",
        "except_clause",
        "except_group_clause",
        "assert_statement",
        "if_clause",
    }
)


# -------------------------Syntax------------------------- #


def _syntax_of(root: Node) -> SyntaxSummary:
    n_nodes = 0
    n_levels = 0
    for _, depth in iter_named_nodes(root):
        n_nodes += 1
        n_levels = max(n_levels, depth)
    n_errors = sum(1 for node in iter_all_nodes(root) if node.is_error or node.is_missing)
    return SyntaxSummary(n_ast_errors=n_errors, n_ast_levels=n_levels, n_ast_nodes=n_nodes)


def parse_syntax(code: str) -> SyntaxSummary:
    """Summarize the concrete syntax tree of a method.

    Nodes and levels are counted over named nodes only; levels is the tree
    height with the root at level 1. Errors are ERROR nodes plus nodes the
    parser inserted as missing.
    """
    return _syntax_of(parse(dedent_from_first_line(code)).root_node)


def _identifiers_of(root: Node) -> int:
    return len({node_text(node) for node, _ in iter_named_nodes(root) if node.type == "identifier"})


def identifier_count(code: str) -> int:
    """Count distinct identifier texts in a method (its own name included)."""
    return _identifiers_of(parse(dedent_from_first_line(code)).root_node)


def _complexity_of(root: Node) -> int:
    return 1 + sum(1 for node in iter_all_nodes(root) if node.type in DECISION_NODE_TYPES)


def cyclomatic_complexity(code: str) -> int:
    """1 plus the number of decision points; else and finally add nothing."""
    return _complexity_of(parse(dedent_from_first_line(code)).root_node)


def _nloc_of(root: Node, source: str) -> int:
    rows: set[int] = set()
    for node in iter_all_nodes(root):
        if node.type == "comment":
            continue
        # a string covers its continuation lines, whatever they start with
        if node.type == "string" or node.child_count == 0:
            rows.update(range(node.start_point[0], node.end_point[0] + 1))
    lines = source.split("\n")
    return sum(1 for row in rows if row < len(lines) and lines[row].strip())


def count_nloc(code: str) -> int:
    """Count lines holding code: blank lines and lines with only a comment node are left out."""
    source = dedent_from_first_line(code)
    return _nloc_of(parse(source).root_node, source)


# -------------------------Lexical------------------------- #


def lexical_profile(text: str | None) -> LexicalProfile:
    if not text:
        return EMPTY_PROFILE
    words = split_words(text)
    return LexicalProfile(
        n_words=len(words),
        vocab_size=len(set(words)),
        n_whitespaces=sum(1 for ch in text if ch in WHITESPACE_CHARS),
    )


class BpeTokenizer:
    """Byte-level BPE tokenizer loaded from a vocabulary and merges file.

    The model file is JSON with "vocab" (token -> id) and "merges" (ordered
    pairs, either ["a", "b"] lists or "a b" strings). A full tokenizer.json
    export (with a "model" section) is accepted as well.
    """

    def __init__(self, tokenizer: Tokenizer, model_hash: str = ""):
        self._tokenizer = tokenizer
        self.model_hash = model_hash

    @classmethod
    def from_file(cls, path: str | Path) -> "BpeTokenizer":
        path = Path(path)
        try:
            raw = path.read_bytes()
            document = json.loads(raw)
        except (OSError, json.JSONDecodeError) as e:
            raise VocabMissing(f"Cannot load tokenizer model {path}: {e}")

        model_hash = hashlib.sha256(raw).hexdigest()
        if "model" in document:
            try:
                return cls(Tokenizer.from_str(raw.decode("utf-8")), model_hash=model_hash)
            except Exception as e:
                raise VocabMissing(f"Malformed tokenizer file {path}: {e}")

        return cls.from_vocab(document.get("vocab"), document.get("merges"), model_hash=model_hash, source=str(path))

    @classmethod
    def from_vocab(
        cls,
        vocab: dict[str, int] | None,
        merges: list | None,
        model_hash: str = "",
        source: str = "<memory>",
    ) -> "BpeTokenizer":
        if not isinstance(vocab, dict) or not isinstance(merges, list):
            raise VocabMissing(f"Tokenizer model {source} needs a 'vocab' object and a 'merges' list")

        pairs = []
        for merge in merges:
            pair = merge.split(" ") if isinstance(merge, str) else merge
            if len(pair) != 2:
                raise VocabMissing(f"Malformed merge {merge!r} in {source}")
            pairs.append((pair[0], pair[1]))

        tokenizer = Tokenizer(models.BPE(vocab=vocab, merges=pairs))
        tokenizer.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
        if not model_hash:
            payload = json.dumps({"vocab": vocab, "merges": pairs}, sort_keys=True).encode("utf-8")
            model_hash = hashlib.sha256(payload).hexdigest()
        return cls(tokenizer, model_hash=model_hash)

    def encode_ids(self, text: str) -> list[int]:
        if not text:
            return []
        return self._tokenizer.encode(text, add_special_tokens=False).ids


def bpe_token_count(code: str, vocab: BpeTokenizer | None) -> int:
    """Number of subword tokens of code under the configured BPE model.

    Raises:
        VocabMissing: No tokenizer model was configured.
    """
    if vocab is None:
        raise VocabMissing("No tokenizer model configured (features.tokenizer_path)")
    return len(vocab.encode_ids(code))


# -------------------------Language------------------------- #


class LanguageIdentifier(Protocol):
    def rank(self, text: str) -> list[tuple[str, float]]:
        """Return (label, confidence) pairs, most likely first."""
        ...


class LangdetectIdentifier:
    """Character n-gram identifier backed by langdetect, seeded for determinism."""

    def __init__(self, seed: int = 0):
        try:
            from langdetect import DetectorFactory, detector_factory

            DetectorFactory.seed = seed
            # Profiles load lazily and the lazy load is not thread-safe
            detector_factory.init_factory()
        except Exception as e:
            raise DetectorUnavailable(f"Cannot load langdetect profiles: {e}")

    def rank(self, text: str) -> list[tuple[str, float]]:
        from langdetect import detect_langs
        from langdetect.lang_detect_exception import LangDetectException

        try:
            ranked = detect_langs(text)
        except LangDetectException:
            return []
        return [(language.lang.split("-")[0], float(language.prob)) for language in ranked]


def detect_doc_language(
    docstring: str, threshold: float = 0.9, identifier: LanguageIdentifier | None = None
) -> LanguageTag:
    """Tag a docstring with its language, or "und" below the confidence threshold.

    Raises:
        DetectorUnavailable: The default identifier cannot be loaded.
    """
    identifier = identifier or LangdetectIdentifier()
    ranked = identifier.rank(docstring)
    if not ranked:
        if threshold > 0:
            return UNDETERMINED
        # a zero threshold accepts any label, even for text with nothing to identify
        return LanguageTag(code=constants.NO_LINGUISTIC_CONTENT, confidence=0.0)
    code, confidence = max(ranked, key=lambda item: item[1])
    confidence = round(confidence, 6)
    if confidence >= threshold:
        return LanguageTag(code=code, confidence=confidence)
    return LanguageTag(code="und", confidence=confidence)


# -------------------------Enrich------------------------- #


def enrich(
    snippet: RawSnippet,
    config: FeatureConfig,
    tokenizer: BpeTokenizer | None,
    identifier: LanguageIdentifier | None = None,
) -> DataPoint:
    """Compute the documentation, syntax and metric dimensions of a snippet.

    Vulnerability spans and mutation are left empty for later stages.

    Raises:
        VocabMissing: No tokenizer model is available.
        DetectorUnavailable: The language identifier cannot be loaded.
    """
    source = dedent_from_first_line(snippet.code)
    root = parse(source).root_node

    doc_profile = lexical_profile(snippet.docstring)
    if snippet.docstring and doc_profile.n_words:
        doc_language = detect_doc_language(snippet.docstring, config.language_threshold, identifier)
    else:
        doc_language = UNDETERMINED

    return DataPoint(
        **asdict(snippet),
        doc_profile=doc_profile,
        doc_language=doc_language,
        doc_valid=doc_profile.n_words > config.min_doc_words,
        code_profile=lexical_profile(snippet.code),
        syntax=_syntax_of(root),
        token_count=bpe_token_count(snippet.code, tokenizer),
        nloc=_nloc_of(root, source),
        complexity=_complexity_of(root),
        n_identifiers=_identifiers_of(root),
    )
