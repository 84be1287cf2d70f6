"""SQL subset: non-nested single/multi-table selects with conjunctive
predicates, optional aggregation and grouping.

Multiple tables in FROM require equi-join predicates on doc_id connecting
all of them (within-document joins only). Aggregates are constrained by
attribute type: text supports COUNT, date adds MAX/MIN, number all five.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..catalog import AGGREGATES_FOR, Catalog
from ..errors import SqlError
from ..sqllex import Token, TokenStream, tokenize

AGG_FUNCS = ("COUNT", "SUM", "AVG", "MAX", "MIN")
COMPARE_OPS = ("=", ">", ">=", "<", "<=")

OP_PHRASES = {
    "=": "is",
    ">": "is greater than",
    ">=": "is at least",
    "<": "is less than",
    "<=": "is at most",
    "LIKE": "is like",
    "IN": "is one of",
}

DOC_ID = "doc_id"


@dataclass(frozen=True)
class AttrRef:
    table: str  # canonical table name
    name: str  # attribute name as declared (doc_id for the system attribute)
    attr_type: str
    description: str

    @property
    def key(self) -> str:
        return f"{self.table.lower()}.{self.name.lower()}"

    @property
    def is_doc_id(self) -> bool:
        return self.name.lower() == DOC_ID


@dataclass(frozen=True)
class SelectItem:
    attr: AttrRef | None  # None only for COUNT(*)
    aggregate: str | None
    label: str


@dataclass(frozen=True)
class Predicate:
    attr: AttrRef
    op: str  # = > >= < <= LIKE IN
    operand: object  # constant, or tuple of constants for IN
    descr: str


@dataclass
class Query:
    select: list[SelectItem]
    tables: list[str]
    predicates: list[Predicate] = field(default_factory=list)
    joins: list[tuple[str, str]] = field(default_factory=list)
    group_by: list[AttrRef] = field(default_factory=list)

    @property
    def has_aggregates(self) -> bool:
        return any(item.aggregate for item in self.select)

    def table_predicates(self, table: str) -> list[Predicate]:
        return [p for p in self.predicates if p.attr.table.lower() == table.lower()]


def render_descr(attr: AttrRef, op: str, operand) -> str:
    """Natural-language predicate rendering used inside oracle prompts."""
    if op == "IN":
        listed = ", ".join(str(v) for v in operand)
        return f"{attr.description} {OP_PHRASES[op]} {listed}"
    return f"{attr.description} {OP_PHRASES[op]} {operand}"


class _Resolver:
    def __init__(self, catalog: Catalog, tables: list[str]):
        self.catalog = catalog
        self.tables = tables

    def resolve(self, table: str | None, attr: str, pos: int) -> AttrRef:
        if attr.lower() == DOC_ID:
            host = table or self.tables[0]
            self._check_table(host, pos)
            return AttrRef(table=self._canonical(host), name=DOC_ID,
                           attr_type="text", description="document identifier")
        if table is not None:
            self._check_table(table, pos)
            row = self._attr_row(table, attr, pos)
            return AttrRef(table=self._canonical(table), name=row.attr_name,
                           attr_type=row.attr_type, description=row.description)
        hosts = [t for t in self.tables
                 if attr.lower() in self.catalog.attributes.get(t.lower(), {})]
        if not hosts:
            raise SqlError(f"unknown attribute '{attr}'", position=pos)
        if len(hosts) > 1:
            raise SqlError(f"ambiguous attribute '{attr}' (in {', '.join(hosts)})",
                           position=pos)
        row = self._attr_row(hosts[0], attr, pos)
        return AttrRef(table=self._canonical(hosts[0]), name=row.attr_name,
                       attr_type=row.attr_type, description=row.description)

    def _check_table(self, table: str, pos: int) -> None:
        if table.lower() not in (t.lower() for t in self.tables):
            raise SqlError(f"table '{table}' not listed in FROM", position=pos)

    def _canonical(self, table: str) -> str:
        return self.catalog.table(table).table_name

    def _attr_row(self, table: str, attr: str, pos: int):
        row = self.catalog.attributes.get(table.lower(), {}).get(attr.lower())
        if row is None:
            raise SqlError(f"unknown attribute '{attr}' on table '{table}'", position=pos)
        return row


def parse_query(sql: str, catalog: Catalog) -> Query:
    stream = TokenStream(tokenize(sql))
    stream.expect_keyword("SELECT")
    raw_select = _parse_select_items(stream)
    stream.expect_keyword("FROM")
    tables = [_expect_table(stream, catalog)]
    while stream.try_symbol(","):
        tables.append(_expect_table(stream, catalog))
    if len(set(t.lower() for t in tables)) != len(tables):
        raise SqlError("duplicate table in FROM")
    resolver = _Resolver(catalog, tables)

    predicates: list[Predicate] = []
    joins: list[tuple[str, str]] = []
    if stream.at_keyword("WHERE"):
        stream.next()
        _parse_condition(stream, resolver, predicates, joins)
        while stream.at_keyword("AND"):
            stream.next()
            _parse_condition(stream, resolver, predicates, joins)

    group_by: list[AttrRef] = []
    if stream.at_keyword("GROUP"):
        stream.next()
        stream.expect_keyword("BY")
        group_by.append(_parse_attr(stream, resolver))
        while stream.try_symbol(","):
            group_by.append(_parse_attr(stream, resolver))

    stream.try_symbol(";")
    tail = stream.peek()
    if tail.kind != "END":
        raise SqlError(f"unexpected trailing input {tail.value!r}", position=tail.pos)

    select = _resolve_select(raw_select, resolver)
    query = Query(select=select, tables=tables, predicates=predicates,
                  joins=joins, group_by=group_by)
    _validate(query)
    return query


def _expect_table(stream: TokenStream, catalog: Catalog) -> str:
    token = stream.expect_kind("IDENT", "table name")
    try:
        return catalog.table(token.value).table_name
    except Exception:
        raise SqlError(f"unknown table '{token.value}'", position=token.pos) from None


def _parse_select_items(stream: TokenStream) -> list[tuple]:
    items = []
    while True:
        items.append(_parse_select_item(stream))
        if not stream.try_symbol(","):
            break
    return items


def _parse_select_item(stream: TokenStream) -> tuple:
    token = stream.peek()
    if token.kind == "IDENT" and token.value.upper() in AGG_FUNCS:
        func = stream.next().value.upper()
        stream.expect_symbol("(")
        if stream.try_symbol("*"):
            if func != "COUNT":
                raise SqlError(f"{func}(*) is not supported", position=token.pos)
            stream.expect_symbol(")")
            return (func, None, token.pos)
        table, attr, pos = _parse_attr_name(stream)
        stream.expect_symbol(")")
        return (func, (table, attr, pos), token.pos)
    table, attr, pos = _parse_attr_name(stream)
    return (None, (table, attr, pos), pos)


def _parse_attr_name(stream: TokenStream) -> tuple[str | None, str, int]:
    first = stream.expect_kind("IDENT", "attribute")
    if stream.try_symbol("."):
        second = stream.expect_kind("IDENT", "attribute")
        return first.value, second.value, first.pos
    return None, first.value, first.pos


def _parse_attr(stream: TokenStream, resolver: _Resolver) -> AttrRef:
    table, attr, pos = _parse_attr_name(stream)
    return resolver.resolve(table, attr, pos)


def _literal(token: Token):
    if token.kind == "STRING":
        return token.value
    if token.kind == "NUMBER":
        return float(token.value)
    raise SqlError(f"expected a literal, found {token.value!r}", position=token.pos)


def _parse_condition(stream: TokenStream, resolver: _Resolver,
                     predicates: list[Predicate], joins: list[tuple[str, str]]) -> None:
    left = _parse_attr(stream, resolver)
    token = stream.next()
    if token.kind == "IDENT" and token.value.upper() == "LIKE":
        operand = stream.next()
        if operand.kind != "STRING":
            raise SqlError("LIKE requires a string literal", position=operand.pos)
        predicates.append(Predicate(attr=left, op="LIKE", operand=operand.value,
                                    descr=render_descr(left, "LIKE", operand.value)))
        return
    if token.kind == "IDENT" and token.value.upper() == "IN":
        stream.expect_symbol("(")
        values = [_literal(stream.next())]
        while stream.try_symbol(","):
            values.append(_literal(stream.next()))
        stream.expect_symbol(")")
        operand = tuple(values)
        predicates.append(Predicate(attr=left, op="IN", operand=operand,
                                    descr=render_descr(left, "IN", operand)))
        return
    if token.kind != "SYM" or token.value not in COMPARE_OPS:
        raise SqlError(f"unknown operator {token.value!r}", position=token.pos)
    op = token.value
    nxt = stream.peek()
    if nxt.kind == "IDENT" and op == "=":
        right = _parse_attr(stream, resolver)
        if not (left.is_doc_id and right.is_doc_id):
            raise SqlError("attribute-to-attribute predicates are only allowed "
                           "as doc_id equi-joins", position=token.pos)
        if left.table.lower() == right.table.lower():
            raise SqlError("doc_id join must connect two different tables",
                           position=token.pos)
        joins.append((left.table, right.table))
        return
    operand = _literal(stream.next())
    if left.attr_type == "number" and not isinstance(operand, float):
        raise SqlError(f"numeric attribute '{left.name}' compared to non-number",
                       position=token.pos)
    predicates.append(Predicate(attr=left, op=op, operand=operand,
                                descr=render_descr(left, op, operand)))


def _resolve_select(raw: list[tuple], resolver: _Resolver) -> list[SelectItem]:
    select = []
    for func, attr_spec, _pos in raw:
        if attr_spec is None:
            select.append(SelectItem(attr=None, aggregate="COUNT", label="COUNT(*)"))
            continue
        table, attr, pos = attr_spec
        ref = resolver.resolve(table, attr, pos)
        if func:
            allowed = AGGREGATES_FOR[ref.attr_type]
            if func not in allowed:
                raise SqlError(
                    f"{ref.attr_type} attribute '{ref.name}' only supports "
                    f"{'/'.join(sorted(allowed))}", position=pos)
            select.append(SelectItem(attr=ref, aggregate=func,
                                     label=f"{func}({ref.name})"))
        else:
            select.append(SelectItem(attr=ref, aggregate=None, label=ref.name))
    return select


def _validate(query: Query) -> None:
    if len(query.tables) > 1:
        linked = {query.tables[0].lower()}
        pending = list(query.joins)
        changed = True
        while changed and pending:
            changed = False
            for pair in list(pending):
                a, b = pair[0].lower(), pair[1].lower()
                if a in linked or b in linked:
                    linked |= {a, b}
                    pending.remove(pair)
                    changed = True
        unlinked = [t for t in query.tables if t.lower() not in linked]
        if unlinked:
            raise SqlError("multiple tables require doc_id equi-join predicates "
                           f"connecting them (missing: {', '.join(unlinked)})")
    if query.has_aggregates or query.group_by:
        group_keys = {a.key for a in query.group_by}
        for item in query.select:
            if item.aggregate is None and item.attr is not None:
                if item.attr.key not in group_keys:
                    raise SqlError(f"'{item.attr.name}' must appear in GROUP BY "
                                   "when aggregates are present")
