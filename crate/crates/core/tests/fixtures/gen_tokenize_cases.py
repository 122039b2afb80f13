"""Regenerates tokenize_cases.jsonl from Python's unicodedata tables.

Run: python3 gen_tokenize_cases.py > tokenize_cases.jsonl
"""
import json
import random
import unicodedata

rng = random.Random(20240611)

LETTERS = list("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
ACCENTED = list("àéîõüçñÀÉÎÕÜÇÑßøÅæ")
GREEK = list("αβγδεζηθλμπρτφψωΑΒΓΔΘΛΠΦΨΩ")
CYRILLIC = list("абвгдежзиклмнопрстуфхцчшщыэюяАБВГДЕЖЗИКЛМНОП")
CJK = list("你好世界中文日本語한국어")
DIGITS = list("0123456789٠١٢")
SPACES = [" ", " ", " ", "\t", "  "]
# every entry is assigned in old Unicode versions, so both tables agree
PUNCT_POOL = [chr(c) for c in list(range(0x21, 0x30)) + list(range(0x3A, 0x41))
              + list(range(0x5B, 0x61)) + list(range(0x7B, 0x7F))
              + list(range(0xA1, 0xC0)) + [0xD7, 0xF7]
              + list(range(0x2010, 0x2028)) + list(range(0x2030, 0x205F))
              + list(range(0x20A0, 0x20B6)) + list(range(0x2190, 0x21FF))
              + list(range(0x2200, 0x22FF)) + list(range(0x3001, 0x3004))
              + list(range(0x3008, 0x3012)) + [0xFF01, 0xFF0C, 0xFF1F, 0xFF08, 0xFF09]]
PUNCT_POOL = [c for c in PUNCT_POOL if unicodedata.category(c)[0] in "PS"]
WORD_POOLS = [LETTERS, LETTERS, ACCENTED, GREEK, CYRILLIC, CJK, DIGITS]


def is_ps(ch):
    return unicodedata.category(ch)[0] in "PS"


def tokenize(text, lowercase, keep_punct):
    if lowercase:
        text = text.lower()
    out = []
    for ch in text:
        if is_ps(ch):
            out.append(" " + ch + " " if keep_punct else " ")
        else:
            out.append(ch)
    return "".join(out).split()


def random_text():
    parts = []
    for _ in range(rng.randint(0, 8)):
        kind = rng.random()
        if kind < 0.55:
            pool = rng.choice(WORD_POOLS)
            parts.append("".join(rng.choice(pool) for _ in range(rng.randint(1, 6))))
        elif kind < 0.85:
            parts.append("".join(rng.choice(PUNCT_POOL) for _ in range(rng.randint(1, 3))))
        else:
            parts.append(rng.choice(SPACES))
        if rng.random() < 0.6:
            parts.append(rng.choice(SPACES))
    return "".join(parts)


FIXED = [
    "", " ", "Hello, world!", "don't", "U.S.A.", "e-mail", "3.14", "$5", "50%",
    "«quoted»", "“curly”", "a—b", "x_y", "a/b\\c", "C++", "#tag @user", "你好，世界。",
    "ÀÉÎ", "ΑΒΓ", "Привет, мир!", "tab\tseparated", "  many   spaces  ",
]


def main():
    cases = []
    for text in FIXED:
        for lc in (True, False):
            for kp in (True, False):
                cases.append((text, lc, kp))
    while len(cases) < 400:
        cases.append((random_text(), rng.random() < 0.7, rng.random() < 0.7))
    for text, lc, kp in cases:
        print(json.dumps({"text": text, "lowercase": lc, "keep_punct": kp,
                          "tokens": tokenize(text, lc, kp)}, ensure_ascii=False))


if __name__ == "__main__":
    main()
