"""Synthetic arithmetic problems with exact integer answers, and a fixed tokenizer."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np

from .exceptions import EncodingError, InputError

PAD, BOS, SEP, END = "<pad>", "<bos>", "<sep>", "<end>"
BOXED_OPEN = "\\boxed{"
BOXED_CLOSE = "}"
OPERATORS = ("+", "-", "×", "÷")
OPERAND_RANGE = (1, 20)
PROMPT_VERB = "solve"

_SYMBOLS = (
    [PAD, BOS, SEP, END, BOXED_OPEN, BOXED_CLOSE]
    + list("0123456789")
    + list(OPERATORS)
    + list("()=?:. ")
    + list("abcdefghijklmnopqrstuvwxyz")
)


class Vocabulary:
    """Character-level vocabulary plus a handful of multi-character markers.

    Encoding is greedy longest-match, so ``\\boxed{`` is always one token.
    """

    def __init__(self, symbols: Iterable[str] = _SYMBOLS):
        self.symbols = list(symbols)
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate vocabulary symbols")
        self.index = {s: i for i, s in enumerate(self.symbols)}
        self._markers = sorted((s for s in self.symbols if len(s) > 1), key=len, reverse=True)

    def __len__(self) -> int:
        return len(self.symbols)

    def id(self, symbol: str) -> int:
        return self.index[symbol]

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def end_id(self) -> int:
        return self.index[END]

    def encode(self, text: str) -> np.ndarray:
        ids, i = [], 0
        while i < len(text):
            for m in self._markers:
                if text.startswith(m, i):
                    ids.append(self.index[m])
                    i += len(m)
                    break
            else:
                ch = text[i]
                if ch not in self.index:
                    raise EncodingError(f"symbol {ch!r} at offset {i} is not in the vocabulary")
                ids.append(self.index[ch])
                i += 1
        return np.asarray(ids, dtype=np.int64)

    def decode(self, tokens: Iterable[int]) -> str:
        try:
            return "".join(self.symbols[int(t)] for t in tokens)
        except IndexError as exc:
            raise EncodingError(f"token id out of range: {exc}") from exc


VOCAB = Vocabulary()


def encode(text: str) -> np.ndarray:
    return VOCAB.encode(text)


def decode(tokens) -> str:
    return VOCAB.decode(tokens)


def response_text(tokens) -> str:
    """Decoded response with a trailing end marker removed."""
    toks = list(tokens)
    if toks and toks[-1] == VOCAB.end_id:
        toks = toks[:-1]
    return VOCAB.decode(toks)


@dataclass(frozen=True)
class ProblemInstance:
    prompt: str
    answer: str
    difficulty: int
    seed: int
    expression: str

    def to_record(self) -> dict:
        return {"prompt": self.prompt, "answer": self.answer,
                "difficulty": self.difficulty, "seed": self.seed}


_PREC = {"+": 1, "-": 1, "×": 2, "÷": 2}


def _render(node) -> str:
    if isinstance(node, int):
        return str(node)
    op, left, right = node
    ls, rs = _render(left), _render(right)
    if not isinstance(left, int) and _PREC[left[0]] < _PREC[op]:
        ls = f"({ls})"
    if not isinstance(right, int) and _PREC[right[0]] <= _PREC[op]:
        rs = f"({rs})"
    return f"{ls}{op}{rs}"


def _value(node) -> Fraction | None:
    """Exact value, or ``None`` if some division is not exact."""
    if isinstance(node, int):
        return Fraction(node)
    op, left, right = node
    a, b = _value(left), _value(right)
    if a is None or b is None:
        return None
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "×":
        return a * b
    if b == 0 or (a / b).denominator != 1:
        return None
    return a / b


def _random_tree(difficulty: int, rng: np.random.Generator):
    lo, hi = OPERAND_RANGE
    tree = int(rng.integers(lo, hi + 1))
    for _ in range(difficulty):
        # grow by replacing a random leaf with a new binary node
        leaves = []

        def collect(node, path):
            if isinstance(node, int):
                leaves.append(path)
            else:
                collect(node[1], path + (1,))
                collect(node[2], path + (2,))

        collect(tree, ())
        path = leaves[int(rng.integers(len(leaves)))]
        op = OPERATORS[int(rng.integers(len(OPERATORS)))]
        new_leaf = int(rng.integers(lo, hi + 1))

        def replace(node, path):
            if not path:
                return (op, node, new_leaf) if rng.random() < 0.5 else (op, new_leaf, node)
            parts = list(node)
            parts[path[0]] = replace(node[path[0]], path[1:])
            return tuple(parts)

        tree = replace(tree, path)
    return tree


def render_prompt(expression: str) -> str:
    return f"{BOS}{PROMPT_VERB} {expression}{SEP}"


def generate_problem(difficulty: int, rng_stream) -> ProblemInstance:
    """Random expression with ``difficulty`` operators; divisions are always exact.

    ``rng_stream`` is an integer seed (recorded as provenance) or a Generator.
    """
    if difficulty < 1:
        raise InputError("difficulty must be at least 1")
    if isinstance(rng_stream, np.random.Generator):
        seed = int(rng_stream.integers(2**31))
    else:
        seed = int(rng_stream)
    rng = np.random.default_rng(seed)
    while True:
        tree = _random_tree(difficulty, rng)
        value = _value(tree)
        if value is not None:
            break
    expr = _render(tree)
    return ProblemInstance(render_prompt(expr), str(int(value)), difficulty, seed, expr)


def problem_seed(base_seed: int, *index: int) -> int:
    return int(np.random.SeedSequence([base_seed, *index]).generate_state(1)[0])


def generate_dataset(n: int, difficulty: int, seed: int) -> list[ProblemInstance]:
    return [generate_problem(difficulty, problem_seed(seed, i)) for i in range(n)]


def dump_dataset(problems: Iterable[ProblemInstance], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in problems:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False) + "\n")


def load_dataset(path) -> list[ProblemInstance]:
    out = []
    prefix = f"{BOS}{PROMPT_VERB} "
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        prompt = rec["prompt"]
        expr = prompt[len(prefix):-len(SEP)] if prompt.startswith(prefix) else ""
        out.append(ProblemInstance(prompt, str(rec["answer"]), int(rec["difficulty"]),
                                   int(rec["seed"]), expr))
    return out
