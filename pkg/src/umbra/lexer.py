"""Tokenizer shared by the expression, model and property parsers."""

import re
from dataclasses import dataclass

from .errors import ParseError

NUM, NAME, STRING, OP, EOF = "number", "identifier", "string", "op", "end of input"

# longest operators first
_OPERATORS = [
    "..", "->", "<=", ">=", "!=",
    "(", ")", "[", "]", "{", "}", ",", ";", ":", "'",
    "+", "-", "*", "/", "=", "<", ">", "&", "|", "!", "?",
]
_OPERATORS.sort(key=len, reverse=True)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<num>(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*")
  | (?P<op>"""
    + "|".join(re.escape(op) for op in _OPERATORS)
    + r""")
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    offset: int

    def describe(self):
        if self.kind == EOF:
            return EOF
        return repr(self.value)


def tokenize(text):
    """Split *text* into tokens; comments (``// ...``) and whitespace are dropped."""
    tokens = []
    pos = 0
    end = len(text)
    while pos < end:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text=text)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group()
            if kind == "num":
                # "1..3" must split as 1 .. 3, the regex already refuses "1."
                tokens.append(Token(NUM, value, pos))
            elif kind == "name":
                tokens.append(Token(NAME, value, pos))
            elif kind == "string":
                tokens.append(Token(STRING, value[1:-1], pos))
            else:
                tokens.append(Token(OP, value, pos))
        pos = m.end()
    tokens.append(Token(EOF, "", end))
    return tokens


class TokenStream:
    """Cursor over a token list with expectation tracking for error messages."""

    def __init__(self, text):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def current(self):
        return self.tokens[self.pos]

    def peek(self, k=1):
        i = min(self.pos + k, len(self.tokens) - 1)
        return self.tokens[i]

    def at(self, value, kind=None):
        tok = self.current
        if kind is not None and tok.kind != kind:
            return False
        return tok.value == value and tok.kind in (OP, NAME)

    def at_kind(self, kind):
        return self.current.kind == kind

    def advance(self):
        tok = self.current
        if tok.kind != EOF:
            self.pos += 1
        return tok

    def accept(self, value):
        if self.at(value):
            return self.advance()
        return None

    def expect(self, value):
        if self.at(value):
            return self.advance()
        self.error(f"unexpected {self.current.describe()}", [repr(value)])

    def expect_kind(self, kind):
        if self.current.kind == kind:
            return self.advance()
        self.error(f"unexpected {self.current.describe()}", [kind])

    def error(self, message, expected=(), offset=None):
        if offset is None:
            offset = self.current.offset
        raise ParseError(message, offset, expected, text=self.text)
