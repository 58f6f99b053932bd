"""Session fixtures: a tiny local BERT-family model and corpus files.

The model is randomly initialized (seeded) and saved to disk once; exports
only need determinism and word alignment, not meaningful weights, so tests
stay offline and fast.
"""

import json

import pytest
import torch
from tokenizers import Tokenizer, normalizers, pre_tokenizers, processors
from tokenizers.models import WordPiece
from transformers import BertConfig, BertModel, BertTokenizerFast

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
WORDS = [
    "insomnia", "is", "often", "caused", "by", "fear", "stress",
    "water", "hammer", "pressure", "the", "clock", "struck", "with",
    "loud", "chime", "heat", "makes", "waves", "wind", "drives",
    "rain", "cools", "air", "dust", "storms", "smoke", "harms",
    "lungs", "noise", "play", "##ing", "##ly",
]
HIDDEN_SIZE = 32

SENTENCES = [
    ("s01", ["insomnia", "is", "often", "caused", "by", "fear"]),
    ("s02", ["water", "hammer", "pressure"]),
    ("s03", ["the", "clock", "struck"]),
    ("s04", ["heat", "makes", "waves"]),
    ("s05", ["wind", "drives", "rain"]),
    ("s06", ["rain", "cools", "air"]),
    ("s07", ["dust", "makes", "storms"]),
    ("s08", ["smoke", "harms", "lungs"]),
    ("s09", ["loud", "noise", "is", "stress"]),
    ("s10", ["fear", "caused", "insomnia"]),
]


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("tiny-bert")
    vocab = SPECIALS + WORDS
    vocab_map = {token: i for i, token in enumerate(vocab)}
    backend = Tokenizer(WordPiece(vocab_map, unk_token="[UNK]"))
    backend.normalizer = normalizers.BertNormalizer(lowercase=True)
    backend.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    backend.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab_map["[CLS]"]), ("[SEP]", vocab_map["[SEP]"])],
    )
    tokenizer = BertTokenizerFast(
        tokenizer_object=backend, unk_token="[UNK]", pad_token="[PAD]",
        cls_token="[CLS]", sep_token="[SEP]", mask_token="[MASK]",
        do_lower_case=True,
    )
    config = BertConfig(
        vocab_size=len(vocab), hidden_size=HIDDEN_SIZE, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64, max_position_embeddings=64,
    )
    torch.manual_seed(0)
    model = BertModel(config)
    model.save_pretrained(path)
    tokenizer.save_pretrained(path)
    return str(path)


def write_corpus(path, rows):
    lines = []
    for sent_id, tokens in rows:
        lines.append(json.dumps({
            "id": sent_id,
            "dataset": "demo",
            "tokens": tokens,
            "labels": ["O"] * len(tokens),
            "heads": [-1] + list(range(len(tokens) - 1)),
            "rels": ["root"] + ["dep"] * (len(tokens) - 1),
        }))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def corpus_file(tmp_path_factory):
    return write_corpus(tmp_path_factory.mktemp("corpus") / "demo.jsonl", SENTENCES)
