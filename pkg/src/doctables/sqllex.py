"""Tiny shared lexer for the DDL dialect and the query subset."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SqlError

_SYMBOLS = (">=", "<=", "!=", "<>", "(", ")", ",", ";", "=", ">", "<", "*", ".")


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT | STRING | NUMBER | SYM | END
    value: str
    pos: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if text.startswith("--", i):  # line comment
            j = text.find("\n", i)
            i = n if j == -1 else j + 1
            continue
        if ch == "'":
            j = i + 1
            chunks = []
            while True:
                if j >= n:
                    raise SqlError("unterminated string literal", position=i)
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        chunks.append("'")
                        j += 2
                        continue
                    break
                chunks.append(text[j])
                j += 1
            tokens.append(Token("STRING", "".join(chunks), i))
            i = j + 1
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            tokens.append(Token("NUMBER", text[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("IDENT", text[i:j], i))
            i = j
            continue
        for symbol in _SYMBOLS:
            if text.startswith(symbol, i):
                tokens.append(Token("SYM", symbol, i))
                i += len(symbol)
                break
        else:
            raise SqlError(f"unexpected character {ch!r}", position=i)
    tokens.append(Token("END", "", n))
    return tokens


class TokenStream:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.index = 0

    def peek(self) -> Token:
        return self.tokens[self.index]

    def next(self) -> Token:
        token = self.tokens[self.index]
        if token.kind != "END":
            self.index += 1
        return token

    def at_keyword(self, *words: str) -> bool:
        token = self.peek()
        return token.kind == "IDENT" and token.value.upper() in words

    def expect_keyword(self, word: str) -> Token:
        token = self.next()
        if token.kind != "IDENT" or token.value.upper() != word:
            raise SqlError(f"expected {word}, found {token.value!r}", position=token.pos)
        return token

    def expect_kind(self, kind: str, what: str) -> Token:
        token = self.next()
        if token.kind != kind:
            raise SqlError(f"expected {what}, found {token.value!r}", position=token.pos)
        return token

    def expect_symbol(self, symbol: str) -> Token:
        token = self.next()
        if token.kind != "SYM" or token.value != symbol:
            raise SqlError(f"expected '{symbol}', found {token.value!r}", position=token.pos)
        return token

    def try_symbol(self, symbol: str) -> bool:
        token = self.peek()
        if token.kind == "SYM" and token.value == symbol:
            self.next()
            return True
        return False
