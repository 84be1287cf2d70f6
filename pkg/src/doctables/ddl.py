"""DDL dialect: CREATE TABLE / ALTER TABLE ADD with natural-language
descriptions that later feed oracle prompts.

Grammar (keywords case-insensitive)::

    CREATE TABLE ident [ '(' attr_def (',' attr_def)* ')' ]
        WITH DESCRIPTION 'text' [ TUPLE DESCRIPTION 'text' ] ';'
    ALTER TABLE ident ADD attr_def (',' attr_def)* ';'
    attr_def := ident type WITH DESCRIPTION 'text'       (type: text|number|date)
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import ATTR_TYPES, Catalog
from .errors import SqlError
from .sqllex import TokenStream, tokenize


@dataclass
class AttrDef:
    name: str
    attr_type: str
    description: str


@dataclass
class CreateTable:
    name: str
    description: str
    tuple_description: str | None
    attributes: list[AttrDef] = field(default_factory=list)


@dataclass
class AlterTable:
    name: str
    attributes: list[AttrDef] = field(default_factory=list)


@dataclass
class DdlReport:
    created: list[str] = field(default_factory=list)
    attributes_added: list[tuple[str, str]] = field(default_factory=list)

    @property
    def tables_needing_population(self) -> list[str]:
        return list(self.created)


def parse_ddl(text: str) -> list[CreateTable | AlterTable]:
    stream = TokenStream(tokenize(text))
    statements: list[CreateTable | AlterTable] = []
    while stream.peek().kind != "END":
        if stream.at_keyword("CREATE"):
            statements.append(_parse_create(stream))
        elif stream.at_keyword("ALTER"):
            statements.append(_parse_alter(stream))
        else:
            token = stream.peek()
            raise SqlError(f"expected CREATE or ALTER, found {token.value!r}",
                           position=token.pos)
        if not stream.try_symbol(";") and stream.peek().kind != "END":
            token = stream.peek()
            raise SqlError(f"expected ';', found {token.value!r}", position=token.pos)
    return statements


def _parse_attr_def(stream: TokenStream) -> AttrDef:
    name = stream.expect_kind("IDENT", "attribute name").value
    type_token = stream.expect_kind("IDENT", "attribute type")
    attr_type = type_token.value.lower()
    if attr_type not in ATTR_TYPES:
        raise SqlError(f"unknown type keyword '{type_token.value}'",
                       position=type_token.pos)
    stream.expect_keyword("WITH")
    stream.expect_keyword("DESCRIPTION")
    description = stream.expect_kind("STRING", "description string").value
    return AttrDef(name=name, attr_type=attr_type, description=description)


def _parse_create(stream: TokenStream) -> CreateTable:
    stream.expect_keyword("CREATE")
    stream.expect_keyword("TABLE")
    name = stream.expect_kind("IDENT", "table name").value
    attributes: list[AttrDef] = []
    if stream.try_symbol("("):
        while True:
            attributes.append(_parse_attr_def(stream))
            if not stream.try_symbol(","):
                break
        stream.expect_symbol(")")
    stream.expect_keyword("WITH")
    stream.expect_keyword("DESCRIPTION")
    description = stream.expect_kind("STRING", "description string").value
    tuple_description = None
    if stream.at_keyword("TUPLE"):
        stream.next()
        stream.expect_keyword("DESCRIPTION")
        tuple_description = stream.expect_kind("STRING", "tuple description").value
    return CreateTable(name=name, description=description,
                       tuple_description=tuple_description, attributes=attributes)


def _parse_alter(stream: TokenStream) -> AlterTable:
    stream.expect_keyword("ALTER")
    stream.expect_keyword("TABLE")
    name = stream.expect_kind("IDENT", "table name").value
    stream.expect_keyword("ADD")
    attributes = [_parse_attr_def(stream)]
    while stream.try_symbol(","):
        attributes.append(_parse_attr_def(stream))
    return AlterTable(name=name, attributes=attributes)


def execute_ddl(catalog: Catalog, text: str) -> DdlReport:
    """Apply parsed statements to the catalog. New tables are reported so the
    caller can run table population; new attributes start NULL everywhere."""
    report = DdlReport()
    for statement in parse_ddl(text):
        if isinstance(statement, CreateTable):
            catalog.create_table(statement.name, statement.description,
                                 statement.tuple_description)
            for attr in statement.attributes:
                catalog.add_attribute(statement.name, attr.name, attr.attr_type,
                                      attr.description)
            report.created.append(statement.name)
        else:
            for attr in statement.attributes:
                catalog.add_attribute(statement.name, attr.name, attr.attr_type,
                                      attr.description)
                report.attributes_added.append((statement.name, attr.name))
    return report
