"""Independent reference for tweet cleaning; writes the committed goldens.

Run from this directory: python3 oracle_clean.py
"""
import json
import random
import re

STRIP = set("*_~^|\\<>=+[]{}`•·‣◦※¦§¶⁂†‡")
COLLAPSE = set(".,!?;:")
ENTITIES = [("&amp;", "&"), ("&lt;", "<"), ("&gt;", ">"), ("&quot;", '"'), ("&#39;", "'"), ("&apos;", "'")]
URL = re.compile(r"(?:https?://|www\.)\S*", re.I)
MENTION = re.compile(r"@\w+")


def one_pass(s):
    for e, p in ENTITIES:
        s = s.replace(e, p)
    s = "".join(c for c in s if c not in STRIP)
    s = URL.sub(" ", s)
    s = MENTION.sub(" ", s)
    out = []
    for c in s:
        if out and out[-1] == c and c in COLLAPSE:
            continue
        out.append(c)
    return " ".join("".join(out).split())


def clean(s):
    prev = one_pass(s)
    while True:
        nxt = one_pass(prev)
        if nxt == prev:
            return prev
        prev = nxt


OPENERS = [
    "We are fighting for working families",
    "Tonight I will be live in Pennsylvania",
    "Make America great again",
    "The economy is stronger than ever",
    "Thank you Georgia",
    "Our freedoms are on the ballot this November",
    "They lied to you about inflation",
    "Join us at the rally",
    "Early voting starts today",
    "I will always stand up for you",
    "Border security is national security",
    "Healthcare is a right not a privilege",
]
MIDDLES = [
    "and we will not go back",
    "so make a plan to vote",
    "because the American people deserve better",
    "and nobody can stop us now",
    "while the other side keeps failing",
    "with the biggest crowd ever seen",
    "for every single family in this country",
    "and that is a promise",
]
URLS = ["https://t.co/Ab3xYz", "http://example.com/vote?id=3&x=1", "www.iwillvote.com", "HTTPS://T.CO/QQ9"]
MENTIONS = ["@KamalaHarris", "@realDonaldTrump", "@TheDemocrats", "@GOP", "@user_123"]
EMOJI = ["🇺🇸", "🔥", "🙏🏽", "👨‍👩‍👧", "❤️", "💪", "😂"]
NOISE = ["!!!", "???", "...", ",,", "?!", "***", "___", "~~", "|", "• ", "[1]", "{x}", "==>", "&amp;", "&quot;", "&#39;", "&lt;3", "\\o/"]


def tweet(rng):
    parts = [rng.choice(OPENERS)]
    for _ in range(rng.randint(0, 3)):
        parts.append(rng.choice(MIDDLES))
    pieces = " ".join(parts).split(" ")
    for _ in range(rng.randint(1, 6)):
        kind = rng.random()
        pos = rng.randint(0, len(pieces))
        if kind < 0.2:
            tok = rng.choice(URLS)
        elif kind < 0.4:
            tok = rng.choice(MENTIONS)
        elif kind < 0.6:
            tok = rng.choice(EMOJI)
        elif kind < 0.8:
            pieces[pos - 1 if pos else 0] += rng.choice(NOISE)
            continue
        else:
            tok = rng.choice(["#Vote2024", "#MAGA", "don't", "\"real\"", "50%", "$4.99", "U.S."])
        pieces.insert(pos, tok)
    sep = rng.choice([" ", "  ", "\n", " \t "])
    return sep.join(pieces)


def main():
    rng = random.Random(2024)
    tweets = [tweet(rng) for _ in range(96)]
    tweets += [
        "",
        "@only @mentions https://t.co/x",
        "one two three four five six seven eight nine",
        " ".join(["word"] * 129),
    ]
    with open("raw_tweets.jsonl", "w") as raw, open("cleaned_golden.jsonl", "w") as gold:
        for i, t in enumerate(tweets):
            tid = f"t{i:03d}"
            c = clean(t)
            assert clean(c) == c
            words = len(c.split())
            raw.write(json.dumps({"id": tid, "text": t}, ensure_ascii=False) + "\n")
            gold.write(
                json.dumps(
                    {"id": tid, "cleaned": c, "words": words, "passes_length": 10 <= words <= 128},
                    ensure_ascii=False,
                )
                + "\n"
            )


if __name__ == "__main__":
    main()
