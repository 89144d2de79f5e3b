"""Lexical similarity between candidate texts: tokenization and ROUGE-L."""

from __future__ import annotations


def tokenize(text: str) -> list[str]:
    """Split text into case-folded tokens on Unicode whitespace.

    Punctuation stays attached to words and no stemming is applied, so the
    same input always yields the same token list. Empty or whitespace-only
    text yields an empty list.
    """
    return text.casefold().split()


def lcs_length(a: list[str], b: list[str]) -> int:
    """Length of the longest common subsequence of two token lists."""
    if not a or not b:
        return 0
    # Two-row DP; O(len(a) * len(b)) time, O(len(b)) memory.
    prev = [0] * (len(b) + 1)
    for tok_a in a:
        curr = [0] * (len(b) + 1)
        for j, tok_b in enumerate(b, start=1):
            if tok_a == tok_b:
                curr[j] = prev[j - 1] + 1
            else:
                curr[j] = max(prev[j], curr[j - 1])
        prev = curr
    return prev[len(b)]


def rouge_l(a: list[str], b: list[str]) -> float:
    """ROUGE-L F1 between two token sequences.

    With L = LCS(a, b): precision = L/|b|, recall = L/|a|, and the score is
    their harmonic mean. Returns 0.0 when either sequence is empty or the
    sequences share no common subsequence; two empty sequences score 0.0 as
    well, since agreement between empty outputs is not consensus evidence.
    Symmetric in its arguments and always in [0, 1].
    """
    if not a or not b:
        return 0.0
    lcs = lcs_length(a, b)
    if lcs == 0:
        return 0.0
    precision = lcs / len(b)
    recall = lcs / len(a)
    return 2.0 * precision * recall / (precision + recall)


def rouge_l_text(text_a: str, text_b: str) -> float:
    """ROUGE-L F1 of two raw strings, tokenized with :func:`tokenize`."""
    return rouge_l(tokenize(text_a), tokenize(text_b))
