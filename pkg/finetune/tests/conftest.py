import json
import random

import pytest

from intentft.data import Dataset, Example, load_dataset
from intentft.training import TrainConfig, train

INFO_KW = ["how", "what", "why"]
NAV_KW = ["login", "homepage", "portal"]
TRANS_KW = ["buy", "download", "order"]
FILLER = ["alpha", "bravo", "carta", "delta", "echo", "fargo", "gumbo", "hotel"]
KEYWORDS = {0: INFO_KW, 1: NAV_KW, 2: TRANS_KW}


def rule_label(query: str) -> int:
    """The generating rule; the oracle every toy check compares against."""
    tokens = set(query.split())
    for label_id, kws in KEYWORDS.items():
        if tokens & set(kws):
            return label_id
    raise AssertionError(f"query carries no class keyword: {query!r}")


def separable_dataset(n_per_class: int, seed: int) -> Dataset:
    """Keyword-separable queries: exactly one class keyword plus filler."""
    rng = random.Random(seed)
    examples = []
    for label_id, kws in KEYWORDS.items():
        for _ in range(n_per_class):
            words = [rng.choice(kws)] + rng.sample(FILLER, k=rng.randint(1, 3))
            rng.shuffle(words)
            examples.append(Example(query=" ".join(words), label_id=label_id))
    rng.shuffle(examples)
    return Dataset(examples=examples)


def unique_examples(dataset: Dataset) -> list[Example]:
    """First occurrence per query text; gold sets forbid duplicate texts."""
    seen: set[str] = set()
    out = []
    for ex in dataset.examples:
        if ex.query in seen:
            continue
        seen.add(ex.query)
        out.append(ex)
    return out


def dataset_to_jsonl(dataset: Dataset, path) -> None:
    labels = ("informational", "navigational", "transactional")
    with open(path, "w", encoding="utf-8") as fh:
        for i, ex in enumerate(dataset.examples):
            fh.write(json.dumps({"query": ex.query, "label": labels[ex.label_id]}))
            fh.write("\n")


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """One 300-query training run shared by the whole session."""
    out = tmp_path_factory.mktemp("toy-artifact")
    train_set = separable_dataset(100, seed=11)
    val_set = separable_dataset(30, seed=12)
    cfg = TrainConfig(seed=0)
    result = train(cfg, train_set, val_set, out)
    return {"result": result, "train_set": train_set, "val_set": val_set, "config": cfg}
