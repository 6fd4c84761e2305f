"""Corpus ingestion, deterministic splitting, metrics, and synthetic data.

File formats (UTF-8, tab-separated, lines starting with '#' ignored):

  multi-label corpus    instance_id <TAB> text <TAB> comma-separated label
                        ids (the last field may be empty: no labels)
  multi-class corpus    class_index <TAB> text
  label descriptions    label_id <TAB> name <TAB> description

The descriptions file fixes the label set and its order; gold vectors and
class indices are expressed against that order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import MULTI_CLASS, MULTI_LABEL
from .errors import ContractError, InputError

FORMAT_MULTI_LABEL = "hoc_style"
FORMAT_MULTI_CLASS = "disease5_style"
FORMATS = (FORMAT_MULTI_LABEL, FORMAT_MULTI_CLASS)

MODE_BY_FORMAT = {
    FORMAT_MULTI_LABEL: MULTI_LABEL,
    FORMAT_MULTI_CLASS: MULTI_CLASS,
}


@dataclass(frozen=True)
class LabelInfo:
    label_id: str
    name: str
    description: str


@dataclass(frozen=True)
class Instance:
    instance_id: str
    text: str
    # binary vector over labels (multi-label) or a class index (multi-class)
    gold: tuple[int, ...] | int


@dataclass
class Corpus:
    instances: list[Instance]
    labels: list[LabelInfo]
    task_mode: str

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    def label_ids(self) -> tuple[str, ...]:
        return tuple(l.label_id for l in self.labels)

    def gold_matrix(self, indices: Sequence[int] | None = None) -> np.ndarray:
        """Gold labels of the selected instances as an array."""
        rows = self.instances if indices is None else [self.instances[i] for i in indices]
        if self.task_mode == MULTI_LABEL:
            return np.array([r.gold for r in rows], dtype=np.int64)
        return np.array([r.gold for r in rows], dtype=np.int64)


@dataclass(frozen=True)
class Split:
    train: tuple[int, ...]
    dev: tuple[int, ...]
    test: tuple[int, ...]

    def of(self, name: str) -> tuple[int, ...]:
        try:
            return getattr(self, name)
        except AttributeError:
            raise ContractError(f"unknown split name {name!r}") from None


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def load_descriptions(path) -> list[LabelInfo]:
    labels: list[LabelInfo] = []
    seen: set[str] = set()
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise InputError(f"{path}:{lineno}: expected 3 tab-separated fields")
        label_id, name, description = (p.strip() for p in parts)
        if not label_id:
            raise InputError(f"{path}:{lineno}: empty label id")
        if label_id in seen:
            raise InputError(f"{path}:{lineno}: duplicate label id {label_id!r}")
        if not description:
            raise InputError(f"{path}:{lineno}: label {label_id!r} has no description")
        seen.add(label_id)
        labels.append(LabelInfo(label_id=label_id, name=name, description=description))
    if not labels:
        raise InputError(f"{path}: no label descriptions found")
    return labels


def load_corpus(path, format: str, descriptions_path) -> Corpus:
    """Read a corpus file plus its label descriptions."""
    if format not in FORMATS:
        raise InputError(f"unknown corpus format {format!r} (use one of {FORMATS})")
    labels = load_descriptions(descriptions_path)
    index = {l.label_id: i for i, l in enumerate(labels)}
    instances: list[Instance] = []
    seen_ids: set[str] = set()
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if format == FORMAT_MULTI_LABEL:
            if len(parts) != 3:
                raise InputError(
                    f"{path}:{lineno}: expected id<TAB>text<TAB>labels"
                )
            instance_id, text, label_field = parts[0].strip(), parts[1], parts[2]
            gold = [0] * len(labels)
            for token in filter(None, (t.strip() for t in label_field.split(","))):
                if token not in index:
                    raise InputError(
                        f"{path}:{lineno}: unknown label id {token!r}"
                    )
                gold[index[token]] = 1
            inst = Instance(instance_id=instance_id, text=text, gold=tuple(gold))
        else:
            if len(parts) != 2:
                raise InputError(f"{path}:{lineno}: expected class<TAB>text")
            cls_field, text = parts[0].strip(), parts[1]
            try:
                cls = int(cls_field)
            except ValueError:
                raise InputError(
                    f"{path}:{lineno}: class index {cls_field!r} is not an integer"
                ) from None
            if not (0 <= cls < len(labels)):
                raise InputError(
                    f"{path}:{lineno}: class index {cls} outside 0..{len(labels) - 1}"
                )
            instance_id = f"line{lineno:06d}"
            inst = Instance(instance_id=instance_id, text=text, gold=cls)
        if inst.instance_id in seen_ids:
            raise InputError(f"{path}:{lineno}: duplicate instance id {inst.instance_id!r}")
        seen_ids.add(inst.instance_id)
        instances.append(inst)
    if not instances:
        raise InputError(f"{path}: corpus is empty")
    return Corpus(instances=instances, labels=labels, task_mode=MODE_BY_FORMAT[format])


def save_corpus(corpus: Corpus, path, descriptions_path) -> None:
    """Write corpus + descriptions in the formats load_corpus reads."""
    with open(descriptions_path, "w", encoding="utf-8") as fh:
        for l in corpus.labels:
            fh.write(f"{l.label_id}\t{l.name}\t{l.description}\n")
    with open(path, "w", encoding="utf-8") as fh:
        for inst in corpus.instances:
            if corpus.task_mode == MULTI_LABEL:
                ids = ",".join(
                    corpus.labels[i].label_id for i, y in enumerate(inst.gold) if y
                )
                fh.write(f"{inst.instance_id}\t{inst.text}\t{ids}\n")
            else:
                fh.write(f"{inst.gold}\t{inst.text}\n")


def split(corpus: Corpus, ratio: tuple[float, float, float], seed: int) -> Split:
    """Shuffle deterministically, then cut into train/dev/test by ratio."""
    a, b, c = ratio
    if a + b + c <= 0 or min(a, b, c) < 0:
        raise InputError(f"split ratio must be nonnegative with positive sum, got {ratio}")
    n = len(corpus.instances)
    if n < 3:
        raise InputError(f"need at least 3 instances to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    total = a + b + c
    cut1 = int(np.floor(a / total * n))
    cut2 = int(np.floor((a + b) / total * n))
    return Split(
        train=tuple(int(i) for i in order[:cut1]),
        dev=tuple(int(i) for i in order[cut1:cut2]),
        test=tuple(int(i) for i in order[cut2:]),
    )


def micro_prf(preds, golds) -> tuple[float, float, float]:
    """Micro-pooled precision/recall/F1 over all (instance, label) pairs.

    Inputs are hard binary arrays of identical shape; 0/0 counts as 0.
    """
    p = np.asarray(preds, dtype=np.int64)
    g = np.asarray(golds, dtype=np.int64)
    if p.shape != g.shape:
        raise ContractError(f"shape mismatch: preds {p.shape} vs golds {g.shape}")
    tp = int(((p == 1) & (g == 1)).sum())
    fp = int(((p == 1) & (g == 0)).sum())
    fn = int(((p == 0) & (g == 1)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def accuracy(preds, golds) -> float:
    p = np.asarray(preds, dtype=np.int64).reshape(-1)
    g = np.asarray(golds, dtype=np.int64).reshape(-1)
    if p.shape != g.shape:
        raise ContractError(f"shape mismatch: preds {p.shape} vs golds {g.shape}")
    if p.size == 0:
        raise ContractError("accuracy of an empty batch is undefined")
    return float((p == g).mean())


_KEYWORD_TEMPLATE = "{name} reports usually mention {keywords} somewhere"


def _random_word(rng: np.random.Generator, length: int) -> str:
    letters = "abcdefghijklmnopqrstuvwxyz"
    return "".join(letters[int(i)] for i in rng.integers(0, 26, size=length))


def _distinct_words(rng: np.random.Generator, count: int) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < count:
        w = _random_word(rng, int(rng.integers(5, 8)))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def make_synthetic_corpus(
    num_labels: int,
    docs_per_label: int,
    vocab_noise_size: int = 50,
    keywords_per_label: int = 2,
    multi_label: bool = False,
    seed: int = 0,
    extra_labels_max: int = 2,
) -> Corpus:
    """Planted-keyword corpus with a known, perfectly learnable signal.

    Every label owns keywords_per_label distinct keyword tokens that appear
    in its description and in exactly the documents carrying that label;
    all other document tokens come from a disjoint noise vocabulary. A
    bag-of-words keyword matcher therefore classifies this corpus
    perfectly, which pins the learnability ceiling for the model.
    """
    if min(num_labels, docs_per_label, vocab_noise_size, keywords_per_label) < 1:
        raise InputError("all synthetic corpus counts must be >= 1")
    rng = np.random.default_rng(seed)
    words = _distinct_words(rng, vocab_noise_size + num_labels * keywords_per_label)
    noise = words[:vocab_noise_size]
    keywords = [
        words[vocab_noise_size + i * keywords_per_label:
              vocab_noise_size + (i + 1) * keywords_per_label]
        for i in range(num_labels)
    ]
    labels = [
        LabelInfo(
            label_id=f"L{i}",
            name=f"topic{i}",
            description=_KEYWORD_TEMPLATE.format(
                name=f"topic{i}", keywords=" ".join(keywords[i])
            ),
        )
        for i in range(num_labels)
    ]
    instances: list[Instance] = []
    for d in range(num_labels * docs_per_label):
        primary = d // docs_per_label
        gold_set = {primary}
        if multi_label and extra_labels_max > 0:
            extras = int(rng.integers(0, extra_labels_max + 1))
            for lab in rng.permutation(num_labels)[:extras]:
                gold_set.add(int(lab))
        body = [noise[int(i)] for i in rng.integers(0, len(noise), size=int(rng.integers(8, 15)))]
        for lab in sorted(gold_set):
            planted = 1 + int(rng.integers(0, keywords_per_label))
            for kw in rng.permutation(keywords_per_label)[:planted]:
                body.insert(int(rng.integers(0, len(body) + 1)), keywords[lab][int(kw)])
        if multi_label:
            gold = tuple(1 if i in gold_set else 0 for i in range(num_labels))
        else:
            gold = primary
        instances.append(
            Instance(instance_id=f"doc{d:05d}", text=" ".join(body), gold=gold)
        )
    return Corpus(
        instances=instances,
        labels=labels,
        task_mode=MULTI_LABEL if multi_label else MULTI_CLASS,
    )


def keyword_match_gold(corpus: Corpus) -> np.ndarray:
    """Brute-force keyword classifier for synthetic corpora.

    Scores each label by how many of its description's distinctive words
    appear in the document. Returns predicted gold in the corpus task
    representation (matrix or class indices).
    """
    # words shared across descriptions carry no signal
    desc_words = [set(l.description.lower().split()) for l in corpus.labels]
    common = set.intersection(*desc_words) if desc_words else set()
    distinctive = [ws - common for ws in desc_words]
    if corpus.task_mode == MULTI_LABEL:
        out = np.zeros((len(corpus.instances), corpus.num_labels), dtype=np.int64)
        for i, inst in enumerate(corpus.instances):
            doc = set(inst.text.lower().split())
            for j, ws in enumerate(distinctive):
                out[i, j] = 1 if doc & ws else 0
        return out
    preds = np.zeros(len(corpus.instances), dtype=np.int64)
    for i, inst in enumerate(corpus.instances):
        doc = set(inst.text.lower().split())
        scores = [len(doc & ws) for ws in distinctive]
        preds[i] = int(np.argmax(scores))
    return preds
