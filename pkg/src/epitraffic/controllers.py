"""Controller programs: strongly typed syntax trees with activation markers.

A controller is an integer-valued expression tree over queue-length
variables.  Every conditional node carries an activation rate in [0, 1];
when the rate falls below the activation threshold the conditional is
silenced and only its else branch runs.  Rates live in an ActivationVector
indexed by the pre-order position of each conditional node, so they travel
with their nodes through crossover.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field, fields

INT = "int"
BOOL = "bool"

# name -> (argument types, return type)
FUNCTIONS: dict[str, tuple[tuple[str, ...], str]] = {
    "add": ((INT, INT), INT),
    "sub": ((INT, INT), INT),
    "mul": ((INT, INT), INT),
    "pdiv": ((INT, INT), INT),
    "and": ((BOOL, BOOL), BOOL),
    "or": ((BOOL, BOOL), BOOL),
    "not": ((BOOL,), BOOL),
    "eq": ((INT, INT), BOOL),
    "gt": ((INT, INT), BOOL),
    "lt": ((INT, INT), BOOL),
    "if3": ((BOOL, INT, INT), INT),
}

VARIABLES = (
    "ver_queue",
    "hor_queue",
    "top1_queue",
    "bottom1_queue",
    "left1_queue",
    "right1_queue",
    "top2_queue",
    "bottom2_queue",
    "left2_queue",
    "right2_queue",
)


class ControllerError(Exception):
    pass


class ControllerParseError(ControllerError):
    pass


@dataclass(frozen=True)
class TrafficContext:
    """The ten queue variables a controller may read, all non-negative."""

    ver_queue: int = 0
    hor_queue: int = 0
    top1_queue: int = 0
    bottom1_queue: int = 0
    left1_queue: int = 0
    right1_queue: int = 0
    top2_queue: int = 0
    bottom2_queue: int = 0
    left2_queue: int = 0
    right2_queue: int = 0


CONTEXT_FIELDS = tuple(f.name for f in fields(TrafficContext))


class TreeNode:
    """Immutable expression node.  `op` is a function name, "const" or "var"."""

    __slots__ = ("op", "value", "children", "n_if3")

    def __init__(self, op: str, value=None, children: tuple = ()):
        self.op = op
        self.value = value
        self.children = tuple(children)
        self.n_if3 = int(op == "if3") + sum(c.n_if3 for c in self.children)

    def __repr__(self) -> str:
        if self.op == "const":
            return f"Const({self.value})"
        if self.op == "var":
            return f"Var({self.value})"
        return f"{self.op}({', '.join(map(repr, self.children))})"

    def __eq__(self, other) -> bool:
        return isinstance(other, TreeNode) and to_tuple(self) == to_tuple(other)

    def __hash__(self) -> int:
        return hash(to_tuple(self))


def const(n: int) -> TreeNode:
    return TreeNode("const", value=int(n))


def var(name: str) -> TreeNode:
    if name not in VARIABLES:
        raise ControllerError(f"unknown variable {name!r}")
    return TreeNode("var", value=name)


def func(op: str, *children: TreeNode) -> TreeNode:
    args, _ = FUNCTIONS[op]
    if len(children) != len(args):
        raise ControllerError(f"{op} takes {len(args)} arguments")
    for child, want in zip(children, args):
        if return_type(child) != want:
            raise ControllerError(f"{op}: expected {want}, got {return_type(child)}")
    return TreeNode(op, children=children)


def return_type(node: TreeNode) -> str:
    if node.op in ("const", "var"):
        return INT
    return FUNCTIONS[node.op][1]


def depth(node: TreeNode) -> int:
    """Levels in the tree; a single node has depth 1."""
    if not node.children:
        return 1
    return 1 + max(depth(c) for c in node.children)


def size(node: TreeNode) -> int:
    return 1 + sum(size(c) for c in node.children)


def to_tuple(node: TreeNode):
    if node.op in ("const", "var"):
        return (node.op, node.value)
    return (node.op,) + tuple(to_tuple(c) for c in node.children)


def from_tuple(t) -> TreeNode:
    op = t[0]
    if op in ("const", "var"):
        return TreeNode(op, value=t[1])
    return TreeNode(op, children=tuple(from_tuple(c) for c in t[1:]))


def check_tree(node: TreeNode, max_depth: int | None = None) -> None:
    """Raise ControllerError when a tree is ill-typed or too deep."""
    if return_type(node) != INT:
        raise ControllerError("controller root must be integer-valued")
    if max_depth is not None and depth(node) > max_depth:
        raise ControllerError(f"tree deeper than {max_depth} levels")

    def walk(n: TreeNode) -> None:
        if n.op == "const":
            if not isinstance(n.value, int):
                raise ControllerError("constant must be an int")
            return
        if n.op == "var":
            if n.value not in VARIABLES:
                raise ControllerError(f"unknown variable {n.value!r}")
            return
        if n.op not in FUNCTIONS:
            raise ControllerError(f"unknown operator {n.op!r}")
        args, _ = FUNCTIONS[n.op]
        if len(n.children) != len(args):
            raise ControllerError(f"{n.op}: wrong arity")
        for child, want in zip(n.children, args):
            if return_type(child) != want:
                raise ControllerError(f"{n.op}: ill-typed child")
            walk(child)

    walk(node)


@dataclass
class ActivationVector:
    """Activation rate per conditional node, in pre-order; threshold 0.5."""

    rates: list[float] = field(default_factory=list)
    threshold: float = 0.5

    def copy(self) -> "ActivationVector":
        return ActivationVector(list(self.rates), self.threshold)


def pdiv_int(a: int, b: int) -> int:
    """Protected integer division: truncates toward zero, 1 on zero divisor."""
    if b == 0:
        return 1
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def evaluate(tree: TreeNode, activations: ActivationVector, ctx: TrafficContext) -> int:
    """Typed evaluation with conditional silencing.

    A conditional whose activation rate is below the threshold evaluates
    only its else branch.  Activation indices are structural (pre-order over
    the whole tree), so silenced subtrees keep their slots.
    """
    rates = activations.rates
    thr = activations.threshold

    def ev(node: TreeNode, base: int):
        op = node.op
        if op == "const":
            return node.value
        if op == "var":
            return getattr(ctx, node.value)
        ch = node.children
        if op == "if3":
            cond, then, other = ch
            if rates[base] < thr:
                return ev(other, base + 1 + cond.n_if3 + then.n_if3)
            if ev(cond, base + 1):
                return ev(then, base + 1 + cond.n_if3)
            return ev(other, base + 1 + cond.n_if3 + then.n_if3)
        if op == "add":
            return ev(ch[0], base) + ev(ch[1], base + ch[0].n_if3)
        if op == "sub":
            return ev(ch[0], base) - ev(ch[1], base + ch[0].n_if3)
        if op == "mul":
            return ev(ch[0], base) * ev(ch[1], base + ch[0].n_if3)
        if op == "pdiv":
            return pdiv_int(ev(ch[0], base), ev(ch[1], base + ch[0].n_if3))
        if op == "and":
            return ev(ch[0], base) and ev(ch[1], base + ch[0].n_if3)
        if op == "or":
            return ev(ch[0], base) or ev(ch[1], base + ch[0].n_if3)
        if op == "not":
            return not ev(ch[0], base)
        if op == "eq":
            return ev(ch[0], base) == ev(ch[1], base + ch[0].n_if3)
        if op == "gt":
            return ev(ch[0], base) > ev(ch[1], base + ch[0].n_if3)
        if op == "lt":
            return ev(ch[0], base) < ev(ch[1], base + ch[0].n_if3)
        raise ControllerError(f"unknown operator {op!r}")

    if len(rates) != tree.n_if3:
        raise ControllerError(
            f"activation vector has {len(rates)} rates for {tree.n_if3} conditionals"
        )
    return int(ev(tree, 0))


def deactivated_rewrite(tree: TreeNode) -> TreeNode:
    """Structural oracle: replace every conditional by its else subtree."""
    if tree.op == "if3":
        return deactivated_rewrite(tree.children[2])
    if tree.op in ("const", "var"):
        return tree
    return TreeNode(tree.op, children=tuple(deactivated_rewrite(c) for c in tree.children))


def longest_queue_controller(threshold_vehicles: int = 5) -> tuple[TreeNode, ActivationVector]:
    """Hand-built baseline: steer green toward the axis whose queue leads by
    more than `threshold_vehicles` (+1 vertical, -1 horizontal, else 0)."""
    tree = func(
        "if3",
        func("gt", var("ver_queue"), func("add", var("hor_queue"), const(threshold_vehicles))),
        const(1),
        func(
            "if3",
            func("gt", var("hor_queue"), func("add", var("ver_queue"), const(threshold_vehicles))),
            const(-1),
            const(0),
        ),
    )
    return tree, ActivationVector([1.0, 1.0])


# ---------------------------------------------------------------------------
# textual export / import
# ---------------------------------------------------------------------------

_PDIV_HELPER = '''def pdiv(a, b):
    """Protected integer division."""
    if b == 0:
        return 1
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q
'''

_BINOPS = {"add": "+", "sub": "-", "mul": "*"}
_CMPOPS = {"eq": "==", "gt": ">", "lt": "<"}


def _render_expr(node: TreeNode, rates: list[float], threshold: float, counter: list[int]) -> str:
    op = node.op
    if op == "const":
        return str(node.value) if node.value >= 0 else f"({node.value})"
    if op == "var":
        return node.value
    if op in _BINOPS:
        a = _render_expr(node.children[0], rates, threshold, counter)
        b = _render_expr(node.children[1], rates, threshold, counter)
        return f"({a} {_BINOPS[op]} {b})"
    if op == "pdiv":
        a = _render_expr(node.children[0], rates, threshold, counter)
        b = _render_expr(node.children[1], rates, threshold, counter)
        return f"pdiv({a}, {b})"
    if op in _CMPOPS:
        a = _render_expr(node.children[0], rates, threshold, counter)
        b = _render_expr(node.children[1], rates, threshold, counter)
        return f"({a} {_CMPOPS[op]} {b})"
    if op == "and" or op == "or":
        a = _render_expr(node.children[0], rates, threshold, counter)
        b = _render_expr(node.children[1], rates, threshold, counter)
        return f"({a} {op} {b})"
    if op == "not":
        return f"(not {_render_expr(node.children[0], rates, threshold, counter)})"
    if op == "if3":
        idx = counter[0]
        counter[0] += 1
        cond = _render_expr(node.children[0], rates, threshold, counter)
        then = _render_expr(node.children[1], rates, threshold, counter)
        other = _render_expr(node.children[2], rates, threshold, counter)
        guard = f"self.activation[{idx}] > {threshold!r} and {cond}"
        return f"({then} if {guard} else {other})"
    raise ControllerError(f"cannot render {op!r}")


def _used_variables(node: TreeNode, acc: set[str]) -> None:
    if node.op == "var":
        acc.add(node.value)
    for c in node.children:
        _used_variables(c, acc)


def controller_to_source(
    tree: TreeNode, activations: ActivationVector, name: str = "Controller0"
) -> str:
    """Render a controller as a runnable Python class.

    Top-level conditionals become if/return statements; nested ones render
    as conditional expressions.  The activation vector is embedded, and the
    silencing semantics are baked into the guards, so the emitted class
    behaves exactly like `evaluate` on the same inputs.
    """
    rates = activations.rates
    thr = activations.threshold
    used: set[str] = set()
    _used_variables(tree, used)
    params = [v for v in CONTEXT_FIELDS if v in used]
    lines = [_PDIV_HELPER, "", f"class {name}:", "    def __init__(self):"]
    lines.append(f"        self.activation = {rates!r}")
    lines.append("")
    lines.append(f"    def traffic_rule(self{''.join(', ' + p for p in params)}):")

    counter = [0]

    def emit(node: TreeNode, indent: str) -> None:
        if node.op == "if3":
            idx = counter[0]
            counter[0] += 1
            cond = _render_expr(node.children[0], rates, thr, counter)
            then = _render_expr(node.children[1], rates, thr, counter)
            lines.append(f"{indent}if self.activation[{idx}] > {thr!r} and {cond}:")
            lines.append(f"{indent}    return {then}")
            emit(node.children[2], indent)
        else:
            lines.append(f"{indent}return {_render_expr(node, rates, thr, counter)}")

    emit(tree, "        ")
    return "\n".join(lines) + "\n"


def _parse_expr(node: ast.expr) -> TreeNode:
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, int):
            raise ControllerParseError(f"unsupported constant {node.value!r}")
        return const(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        inner = _parse_expr(node.operand)
        if inner.op != "const":
            raise ControllerParseError("negation only applies to constants")
        return const(-inner.value)
    if isinstance(node, ast.Name):
        return var(node.id)
    if isinstance(node, ast.BinOp):
        ops = {ast.Add: "add", ast.Sub: "sub", ast.Mult: "mul"}
        kind = ops.get(type(node.op))
        if kind is None:
            raise ControllerParseError(f"unsupported operator {node.op!r}")
        return func(kind, _parse_expr(node.left), _parse_expr(node.right))
    if isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id == "pdiv"):
            raise ControllerParseError("only pdiv() calls are recognized")
        return func("pdiv", *(_parse_expr(a) for a in node.args))
    if isinstance(node, ast.Compare):
        if len(node.ops) != 1:
            raise ControllerParseError("chained comparisons are not recognized")
        ops = {ast.Eq: "eq", ast.Gt: "gt", ast.Lt: "lt"}
        kind = ops.get(type(node.ops[0]))
        if kind is None:
            raise ControllerParseError(f"unsupported comparison {node.ops[0]!r}")
        return func(kind, _parse_expr(node.left), _parse_expr(node.comparators[0]))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not):
        return func("not", _parse_expr(node.operand))
    if isinstance(node, ast.BoolOp):
        kind = "and" if isinstance(node.op, ast.And) else "or"
        values = node.values
        out = func(kind, _parse_expr(values[0]), _parse_expr(values[1]))
        for extra in values[2:]:
            out = func(kind, out, _parse_expr(extra))
        return out
    if isinstance(node, ast.IfExp):
        guard_cond = _split_guard(node.test)
        return func("if3", guard_cond, _parse_expr(node.body), _parse_expr(node.orelse))
    raise ControllerParseError(f"unsupported syntax {ast.dump(node)}")


def _is_activation_guard(node: ast.expr) -> bool:
    return (
        isinstance(node, ast.Compare)
        and isinstance(node.left, ast.Subscript)
        and isinstance(node.left.value, ast.Attribute)
        and node.left.value.attr == "activation"
    )


def _split_guard(test: ast.expr) -> TreeNode:
    """Strip the `self.activation[k] > thr and (...)` wrapper of a conditional."""
    if not (
        isinstance(test, ast.BoolOp)
        and isinstance(test.op, ast.And)
        and len(test.values) == 2
        and _is_activation_guard(test.values[0])
    ):
        raise ControllerParseError("conditional without an activation guard")
    return _parse_expr(test.values[1])


def parse_controller_source(source: str) -> tuple[TreeNode, ActivationVector, str]:
    """Inverse of controller_to_source.  Returns (tree, activations, name)."""
    module = ast.parse(source)
    cls = next((s for s in module.body if isinstance(s, ast.ClassDef)), None)
    if cls is None:
        raise ControllerParseError("no controller class found")
    rates: list[float] | None = None
    rule: ast.FunctionDef | None = None
    threshold = 0.5
    for item in cls.body:
        if isinstance(item, ast.FunctionDef) and item.name == "__init__":
            for stmt in item.body:
                if (
                    isinstance(stmt, ast.Assign)
                    and isinstance(stmt.targets[0], ast.Attribute)
                    and stmt.targets[0].attr == "activation"
                ):
                    rates = [float(v) for v in ast.literal_eval(stmt.value)]
        if isinstance(item, ast.FunctionDef) and item.name == "traffic_rule":
            rule = item
    if rates is None or rule is None:
        raise ControllerParseError("missing activation vector or traffic_rule")

    def parse_stmts(stmts: list[ast.stmt]) -> TreeNode:
        first = stmts[0]
        if isinstance(first, ast.Return):
            return _parse_expr(first.value)
        if isinstance(first, ast.If):
            if len(first.body) != 1 or not isinstance(first.body[0], ast.Return):
                raise ControllerParseError("conditional body must be a single return")
            guard = first.test
            if not (
                isinstance(guard, ast.BoolOp)
                and isinstance(guard.op, ast.And)
                and len(guard.values) == 2
                and _is_activation_guard(guard.values[0])
            ):
                raise ControllerParseError("conditional without an activation guard")
            cond = _parse_expr(guard.values[1])
            then = _parse_expr(first.body[0].value)
            rest = first.orelse if first.orelse else stmts[1:]
            if not rest:
                raise ControllerParseError("conditional without an else continuation")
            return func("if3", cond, then, parse_stmts(rest))
        raise ControllerParseError(f"unsupported statement {ast.dump(first)}")

    # read the threshold back from the first guard if present
    for node in ast.walk(rule):
        if isinstance(node, ast.BoolOp) and _is_activation_guard(node.values[0]):
            comp = node.values[0]
            threshold = float(ast.literal_eval(comp.comparators[0]))
            break

    tree = parse_stmts(rule.body)
    check_tree(tree)
    vec = ActivationVector(rates, threshold)
    if len(vec.rates) != tree.n_if3:
        raise ControllerParseError("activation vector length does not match tree")
    return tree, vec, cls.name
