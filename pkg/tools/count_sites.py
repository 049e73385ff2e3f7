"""Count mutation sites in a toy-language file with plain regexes.

Independent of the package's lexer and enumerator: strips comments and
string literals, then counts each operator class and how many replacements
each site admits. Used once to freeze the expected mutation count of the
bundled fixture.

    python tools/count_sites.py FILE...
"""

import re
import sys

RELATIONAL = re.compile(r"<=|>=|==|!=|<|>")
ARITH = re.compile(r"[-+*/]")
NUMBER = re.compile(r"\b\d+\b")
WORDS = re.compile(r"\b(true|false|and|or|not)\b")


def count(text: str) -> int:
    text = re.sub(r'"(?:[^"\\]|\\.)*"', '""', text)
    text = re.sub(r"#[^\n]*", "", text)
    total = 0
    total += len(RELATIONAL.findall(text))
    total += len(ARITH.findall(text))
    for lit in NUMBER.findall(text):
        total += 1 if int(lit) == 0 else 2  # c+1 always, 0 unless already 0
    total += len(WORDS.findall(text))
    return total


if __name__ == "__main__":
    for path in sys.argv[1:]:
        with open(path, encoding="utf-8") as fh:
            print(path, count(fh.read()))
