"""
Reader and writer for the line-based .hmdp model format.

See docs/MODEL_FORMAT.md for the grammar. Every error raised while
reading carries the line and column of the offending token.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import HfmdpError, ModelParseError
from .model import (BasicSubsystem, HierarchicalNode, RelevanceWeights, Scope, SubsystemGroup,
                    SubsystemTree, VariableDecl, WeightsSpec, assignment_at, flatten)

logger = logging.getLogger(__name__)

FORMAT_HEADER = "hfmdp"
FORMAT_VERSION = "1"
TOP_LEVEL = "<tree>"


@dataclass(frozen=True)
class Token:
    text: str
    line: int
    column: int


@dataclass
class Line:
    number: int
    tokens: List[Token]

    @property
    def head(self) -> str:
        return self.tokens[0].text

    def words(self) -> List[str]:
        return [t.text for t in self.tokens]


def tokenize(text: str) -> List[Line]:
    lines = []
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0]
        tokens = []
        column = 0
        for part in content.split():
            column = content.index(part, column)
            tokens.append(Token(part, number, column + 1))
            column += len(part)
        if tokens:
            lines.append(Line(number, tokens))
    return lines


@dataclass
class ModelFile:
    """Everything a model file declares, before flattening."""

    variables: Scope
    discount: float
    top: SubsystemGroup
    weights: WeightsSpec = field(default_factory=WeightsSpec)
    path: Optional[str] = None

    @property
    def hierarchy(self) -> HierarchicalNode:
        if len(self.top.members) == 1 and not self.top.edges:
            return self.top.members[0]
        return self.top

    def build(self) -> Tuple[SubsystemTree, RelevanceWeights]:
        tree = flatten(self.top, self.discount)
        return tree, self.weights.build(tree)


@dataclass
class _TableBlock:
    kind: str          # 'reward' | 'cpt'
    style: str         # 'dense' | 'sparse'
    lines: List[Line]
    start: Line


@dataclass
class _SubsystemBlock:
    name: str
    start: Line
    internal: List[Token] = field(default_factory=list)
    external: List[Token] = field(default_factory=list)
    reward: Optional[_TableBlock] = None
    cpt: Optional[_TableBlock] = None
    class_name: Optional[Token] = None
    bindings: Dict[str, Token] = field(default_factory=dict)


@dataclass
class _GroupBlock:
    name: str
    start: Line
    root: Optional[Token] = None
    members: List[Token] = field(default_factory=list)
    edges: List[Tuple[Token, Token]] = field(default_factory=list)


class _Parser:
    def __init__(self, text: str, path: Optional[str]):
        self.path = path
        self.lines = tokenize(text)
        self.pos = 0
        self.variables: Dict[str, VariableDecl] = {}
        self.discount: Optional[float] = None
        self.classes: Dict[str, _SubsystemBlock] = {}
        self.subsystems: Dict[str, _SubsystemBlock] = {}
        self.groups: Dict[str, _GroupBlock] = {}
        self.tree: Optional[_GroupBlock] = None
        self.weights = WeightsSpec()

    def error(self, message: str, token: Optional[Token] = None, line: Optional[Line] = None) -> ModelParseError:
        if token is not None:
            return ModelParseError(message, token.line, token.column, self.path)
        if line is not None:
            return ModelParseError(message, line.number, line.tokens[0].column, self.path)
        return ModelParseError(message, 0, 0, self.path)

    def next_line(self, context: str) -> Line:
        if self.pos >= len(self.lines):
            last = self.lines[-1] if self.lines else None
            raise self.error(f"unexpected end of file inside {context}", line=last)
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def parse(self) -> ModelFile:
        if not self.lines:
            raise self.error("empty model file")
        header = self.next_line("header")
        if header.words() != [FORMAT_HEADER, FORMAT_VERSION]:
            raise self.error(f"expected header '{FORMAT_HEADER} {FORMAT_VERSION}'", line=header)
        while self.pos < len(self.lines):
            line = self.next_line("model")
            handler = getattr(self, f"_stmt_{line.head}", None)
            if handler is None:
                raise self.error(f"unknown statement {line.head!r}", line.tokens[0])
            handler(line)
        if self.discount is None:
            raise self.error("missing 'discount' statement")
        return self._assemble()

    def _stmt_discount(self, line: Line) -> None:
        if len(line.tokens) != 2:
            raise self.error("usage: discount GAMMA", line=line)
        value = self._number(line.tokens[1])
        if not 0.0 <= value < 1.0:
            raise self.error("discount must lie in [0, 1)", line.tokens[1])
        self.discount = value

    def _stmt_var(self, line: Line) -> None:
        if len(line.tokens) < 3:
            raise self.error("usage: var NAME VALUE VALUE ...", line=line)
        name = line.tokens[1]
        if name.text in self.variables:
            raise self.error(f"variable {name.text} declared twice", name)
        domain = tuple(t.text for t in line.tokens[2:])
        if len(set(domain)) != len(domain):
            raise self.error(f"variable {name.text} repeats a value", name)
        self.variables[name.text] = VariableDecl(name.text, domain, len(self.variables))

    def _stmt_subsystem(self, line: Line) -> None:
        block = self._subsystem_block(line, "subsystem")
        if block.name in self.subsystems or block.name in self.groups:
            raise self.error(f"name {block.name} used twice", line.tokens[1])
        self.subsystems[block.name] = block

    def _stmt_class(self, line: Line) -> None:
        block = self._subsystem_block(line, "class")
        if block.name in self.classes:
            raise self.error(f"class {block.name} defined twice", line.tokens[1])
        self.classes[block.name] = block

    def _subsystem_block(self, line: Line, keyword: str) -> _SubsystemBlock:
        if len(line.tokens) < 2:
            raise self.error(f"usage: {keyword} NAME", line=line)
        block = _SubsystemBlock(line.tokens[1].text, line)
        rest = line.tokens[2:]
        if rest:
            # one-line instance: subsystem NAME class CLASS bind f=v ...
            if keyword != "subsystem" or rest[0].text != "class" or len(rest) < 2:
                raise self.error("expected 'class CLASS bind ...'", rest[0])
            block.class_name = rest[1]
            if len(rest) > 2:
                if rest[2].text != "bind":
                    raise self.error("expected 'bind'", rest[2])
                for tok in rest[3:]:
                    formal, _, actual = tok.text.partition("=")
                    if not actual:
                        raise self.error("bindings are written formal=variable", tok)
                    block.bindings[formal] = Token(actual, tok.line, tok.column + len(formal) + 1)
            return block
        while True:
            inner = self.next_line(f"{keyword} {block.name}")
            head = inner.head
            if head == "end":
                return block
            if head == "internal":
                block.internal.extend(inner.tokens[1:])
            elif head == "external":
                block.external.extend(inner.tokens[1:])
            elif head in ("reward", "cpt"):
                style = inner.tokens[1].text if len(inner.tokens) > 1 else "dense"
                if style not in ("dense", "sparse"):
                    raise self.error("table style must be dense or sparse", inner.tokens[1])
                table = _TableBlock(head, style, [], inner)
                while True:
                    row = self.next_line(f"{head} table of {block.name}")
                    if row.head == "end":
                        break
                    table.lines.append(row)
                if getattr(block, head) is not None:
                    raise self.error(f"second {head} table", inner.tokens[0])
                setattr(block, head, table)
            else:
                raise self.error(f"unexpected {head!r} in {keyword} block", inner.tokens[0])

    def _stmt_group(self, line: Line) -> None:
        if len(line.tokens) < 2:
            raise self.error("usage: group NAME [root MEMBER]", line=line)
        block = self._group_block(line, line.tokens[1].text)
        if block.name in self.groups or block.name in self.subsystems:
            raise self.error(f"name {block.name} used twice", line.tokens[1])
        self.groups[block.name] = block

    def _stmt_tree(self, line: Line) -> None:
        if self.tree is not None:
            raise self.error("second tree block", line.tokens[0])
        self.tree = self._group_block(line, TOP_LEVEL)

    def _group_block(self, line: Line, name: str) -> _GroupBlock:
        block = _GroupBlock(name, line)
        rest = line.tokens[2:] if name != TOP_LEVEL else line.tokens[1:]
        if rest:
            if rest[0].text != "root" or len(rest) != 2:
                raise self.error("expected 'root MEMBER'", rest[0])
            block.root = rest[1]
        while True:
            inner = self.next_line(f"group {name}")
            head = inner.head
            if head == "end":
                return block
            if head == "root" and len(inner.tokens) == 2:
                block.root = inner.tokens[1]
            elif head == "members":
                block.members.extend(inner.tokens[1:])
            elif head == "edge" and len(inner.tokens) == 3:
                block.edges.append((inner.tokens[1], inner.tokens[2]))
            else:
                raise self.error(f"unexpected {head!r} in group block", inner.tokens[0])

    def _stmt_weights(self, line: Line) -> None:
        if len(line.tokens) != 2:
            raise self.error("usage: weights ones|normalized|custom", line=line)
        convention = line.tokens[1].text
        if convention in ("ones", "normalized"):
            self.weights = WeightsSpec(convention)
            return
        if convention != "custom":
            raise self.error(f"unknown weights convention {convention!r}", line.tokens[1])
        named: Dict[str, Tuple[float, ...]] = {}
        while True:
            inner = self.next_line("weights block")
            if inner.head == "end":
                break
            named[inner.head] = tuple(self._number(t) for t in inner.tokens[1:])
        self.weights = WeightsSpec("custom", named)

    def _number(self, token: Token) -> float:
        try:
            value = float(token.text)
        except ValueError:
            raise self.error(f"expected a number, got {token.text!r}", token) from None
        if not np.isfinite(value):
            raise self.error("numbers must be finite", token)
        return value

    def _var(self, token: Token) -> VariableDecl:
        try:
            return self.variables[token.text]
        except KeyError:
            raise self.error(f"undeclared variable {token.text}", token) from None

    def _table(self, table: _TableBlock, scope: Scope, internal: Scope, owner: str) -> np.ndarray:
        width = 1 if table.kind == "reward" else internal.size
        if table.style == "dense":
            numbers = [self._number(t) for row in table.lines for t in row.tokens]
            expected = scope.size * width
            if len(numbers) != expected:
                raise self.error(f"{owner}: {table.kind} table has {len(numbers)} numbers, expected {expected}",
                                 line=table.start)
            return np.asarray(numbers).reshape(scope.size, width)
        values = np.zeros((scope.size, width))
        seen = np.zeros(scope.size, dtype=bool)
        for row in table.lines:
            words = row.words()
            if ":" not in words:
                raise self.error("sparse rows are written 'var=value ... : numbers'", row.tokens[0])
            split = words.index(":")
            labels = {}
            for tok in row.tokens[:split]:
                name, _, label = tok.text.partition("=")
                if name not in scope:
                    raise self.error(f"{name} is not in the scope of {owner}", tok)
                if label not in scope.variable(name).domain:
                    raise self.error(f"{label!r} is not a value of {name}", tok)
                labels[name] = scope.variable(name).domain.index(label)
            if set(labels) != set(scope.names):
                raise self.error(f"sparse row must assign {', '.join(scope.names)}", row.tokens[0])
            index = int(np.ravel_multi_index(tuple(labels[n] for n in scope.names), scope.shape)) \
                if len(scope) else 0
            if seen[index]:
                raise self.error("assignment listed twice", row.tokens[0])
            numbers = [self._number(t) for t in row.tokens[split + 1:]]
            if len(numbers) != width:
                raise self.error(f"expected {width} numbers", row.tokens[min(split + 1, len(row.tokens) - 1)])
            values[index] = numbers
            seen[index] = True
        if table.kind == "cpt" and not seen.all():
            missing = assignment_at(scope, int(np.flatnonzero(~seen)[0]))
            raise self.error(f"{owner}: CPT row missing for {missing}", line=table.start)
        return values

    def _build_basic(self, block: _SubsystemBlock) -> BasicSubsystem:
        if block.class_name is not None:
            return self._instantiate(block)
        if block.reward is None or block.cpt is None:
            raise self.error(f"subsystem {block.name} needs a reward and a cpt table", line=block.start)
        internal = Scope(self._var(t) for t in block.internal)
        external = Scope(self._var(t) for t in block.external)
        scope = internal.union(external)
        try:
            return BasicSubsystem(block.name, internal, external,
                                  self._table(block.reward, scope, internal, block.name).reshape(-1),
                                  self._table(block.cpt, scope, internal, block.name))
        except HfmdpError as e:
            if isinstance(e, ModelParseError):
                raise
            raise self.error(str(e), line=block.start) from e

    def _instantiate(self, block: _SubsystemBlock) -> BasicSubsystem:
        cls = self.classes.get(block.class_name.text)
        if cls is None:
            raise self.error(f"unknown class {block.class_name.text}", block.class_name)
        formals = [t.text for t in cls.internal + cls.external]
        unbound = [f for f in formals if f not in block.bindings]
        extra = [f for f in block.bindings if f not in formals]
        if unbound or extra:
            raise self.error(f"bindings must cover exactly {formals}", block.class_name)
        actual = {f: self._var(block.bindings[f]) for f in formals}
        # the class is read in its own order: internal formals, then external ones
        formal_decl = {f: VariableDecl(f, actual[f].domain, i) for i, f in enumerate(formals)}
        f_internal = Scope(formal_decl[t.text] for t in cls.internal)
        f_scope = Scope(formal_decl[f] for f in formals)
        if cls.reward is None or cls.cpt is None:
            raise self.error(f"class {cls.name} needs a reward and a cpt table", line=cls.start)
        reward = self._table(cls.reward, f_scope, f_internal, cls.name).reshape(f_scope.shape)
        cpt = self._table(cls.cpt, f_scope, f_internal, cls.name).reshape(f_scope.shape + f_internal.shape)

        internal = Scope(actual[t.text] for t in cls.internal)
        external = Scope(actual[t.text] for t in cls.external)
        if len(internal) != len(cls.internal) or len(external) != len(cls.external) or \
                len(internal.intersection(external)):
            raise self.error("bindings must map formals to distinct variables", block.class_name)
        scope = internal.union(external)
        by_actual = {actual[f].name: f for f in formals}
        scope_perm = [formals.index(by_actual[n]) for n in scope.names]
        internal_formals = [t.text for t in cls.internal]
        internal_perm = [internal_formals.index(by_actual[n]) for n in internal.names]
        reward = np.transpose(reward, scope_perm).reshape(-1)
        axes = scope_perm + [len(formals) + p for p in internal_perm]
        cpt = np.transpose(cpt, axes).reshape(scope.size, internal.size)
        return BasicSubsystem(block.name, internal, external, reward, cpt, class_name=cls.name)

    def _assemble(self) -> ModelFile:
        basics = {name: self._build_basic(block) for name, block in self.subsystems.items()}
        built: Dict[str, HierarchicalNode] = dict(basics)
        owner: Dict[str, str] = {}
        for group in self.groups.values():
            for tok in group.members:
                if tok.text not in basics and tok.text not in self.groups:
                    raise self.error(f"unknown member {tok.text}", tok)
                if tok.text in owner:
                    raise self.error(f"{tok.text} belongs to two groups", tok)
                owner[tok.text] = group.name

        def build_group(block: _GroupBlock, stack: Tuple[str, ...]) -> SubsystemGroup:
            if block.name in stack:
                raise self.error(f"group {block.name} contains itself", line=block.start)
            members = []
            for tok in block.members:
                if tok.text in self.groups:
                    members.append(build_group(self.groups[tok.text], stack + (block.name,)))
                else:
                    members.append(basics[tok.text])
            names = [m.name for m in members]
            for child, parent in block.edges:
                for tok in (child, parent):
                    if tok.text not in names:
                        raise self.error(f"{tok.text} is not a member of {block.name}", tok)
            root = block.root.text if block.root is not None else (names[0] if names else None)
            if root is not None and root not in names:
                raise self.error(f"root {root} is not a member of {block.name}", block.root)
            group = SubsystemGroup(block.name, tuple(members), {c.text: p.text for c, p in block.edges}, root)
            built[block.name] = group
            return group

        top_block = self.tree
        if top_block is None:
            loose = [n for n in list(self.subsystems) + list(self.groups) if n not in owner]
            if len(loose) != 1:
                raise self.error("a 'tree' block is required when there is more than one top-level node")
            top_block = _GroupBlock(TOP_LEVEL, self.lines[0], members=[Token(loose[0], 0, 0)])
        else:
            listed = {t.text for t in top_block.members}
            for child, parent in top_block.edges:
                for tok in (child, parent):
                    if tok.text not in listed:
                        top_block.members.append(tok)
                        listed.add(tok.text)
            if top_block.root is not None and top_block.root.text not in listed:
                top_block.members.insert(0, top_block.root)
            for tok in top_block.members:
                if tok.text not in basics and tok.text not in self.groups:
                    raise self.error(f"unknown subsystem or group {tok.text}", tok)
                if tok.text in owner:
                    raise self.error(f"{tok.text} belongs to group {owner[tok.text]}", tok)
        top = build_group(top_block, ())
        unused = [n for n in list(self.subsystems) + list(self.groups)
                  if n not in owner and n not in {m.name for m in top.members}]
        if unused:
            raise self.error(f"nodes {unused} are not attached to the tree")
        variables = Scope(self.variables.values())
        logger.debug("parsed %d subsystems, %d groups", len(basics), len(self.groups))
        return ModelFile(variables=variables, discount=self.discount, top=top, weights=self.weights,
                         path=self.path)


def parse_model(text: str, path: Optional[str] = None) -> ModelFile:
    """
    Parse model text.

    Raises:
        ModelParseError: on any syntax or content error, with line and column
    """
    return _Parser(text, path).parse()


def load_model(path: str) -> ModelFile:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ModelParseError(f"cannot read model: {e.strerror}", 0, 0, path) from e
    return parse_model(text, path)


def _fmt(value: float) -> str:
    value = float(value)
    return repr(int(value)) if value.is_integer() and abs(value) < 1e15 else repr(value)


def _dump_subsystem(m: BasicSubsystem, out: List[str]) -> None:
    out.append(f"subsystem {m.name}")
    out.append("  internal " + " ".join(m.internal.names))
    if len(m.external):
        out.append("  external " + " ".join(m.external.names))
    out.append("  reward dense")
    out.append("    " + " ".join(_fmt(v) for v in m.reward))
    out.append("  end")
    out.append("  cpt dense")
    for row in m.cpt:
        out.append("    " + " ".join(_fmt(v) for v in row))
    out.append("  end")
    out.append("end")


def _dump_node(node: HierarchicalNode, out: List[str], groups: List[str]) -> None:
    if isinstance(node, BasicSubsystem):
        _dump_subsystem(node, out)
        return
    for member in node.members:
        _dump_node(member, out, groups)
    if node.name == TOP_LEVEL:
        lines = ["tree", f"  root {node.root}", "  members " + " ".join(node.member_names)]
    else:
        lines = [f"group {node.name} root {node.root}",
                 "  members " + " ".join(node.member_names)]
    for member in node.member_names:
        if member in node.edges:
            lines.append(f"  edge {member} {node.edges[member]}")
    lines.append("end")
    groups.extend(lines)


def dump_model(model: ModelFile) -> str:
    """Canonical text: dense tables, classes expanded, groups kept."""
    out = [f"{FORMAT_HEADER} {FORMAT_VERSION}", f"discount {_fmt(model.discount)}"]
    for var in model.variables:
        out.append(f"var {var.name} " + " ".join(var.domain))
    groups: List[str] = []
    _dump_node(model.top, out, groups)
    out.extend(groups)
    if model.weights.convention == "custom":
        out.append("weights custom")
        for name, values in model.weights.named.items():
            out.append(f"  {name} " + " ".join(_fmt(v) for v in values))
        out.append("end")
    else:
        out.append(f"weights {model.weights.convention}")
    return "\n".join(out) + "\n"


def model_from_tree(tree: SubsystemTree, weights: Optional[RelevanceWeights] = None,
                    convention: str = "ones") -> ModelFile:
    """Wrap a flat tree (e.g. from a generator) so it can be written out."""
    edges = {tree[k].name: tree[tree.parent(k)].name for k in range(1, len(tree))}
    top = SubsystemGroup(TOP_LEVEL, tuple(tree.subsystems), edges, tree[0].name)
    if weights is not None and weights.convention == "custom":
        spec = WeightsSpec("custom", {tree[j].name: tuple(float(v) for v in weights[j]) for j in range(len(tree))})
    else:
        spec = WeightsSpec(weights.convention if weights is not None else convention)
    return ModelFile(variables=tree.variables, discount=tree.discount, top=top, weights=spec)
