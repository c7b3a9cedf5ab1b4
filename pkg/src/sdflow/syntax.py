"""Abstract syntax for the dataflow kernel language.

Three layers share this module: type-level syntax (size expressions, kinds,
channel types, flowstates), value-level syntax (expressions, processes,
networks), and the environments that bind them.  All nodes are immutable;
source locations are carried on value-level nodes but excluded from
structural equality so that parse/print round-trips compare clean.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Union

Loc = tuple[int, int]  # (line, column), 1-based


def _loc_field():
    return field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------------------
# Size expressions (type-level numeric quantities)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("size constants are nonnegative")


@dataclass(frozen=True)
class Infinity:
    pass


@dataclass(frozen=True)
class SVar:
    name: str


@dataclass(frozen=True)
class Add:
    left: "SizeExpr"
    right: "SizeExpr"


@dataclass(frozen=True)
class Sub:
    left: "SizeExpr"
    right: "SizeExpr"


@dataclass(frozen=True)
class Mul:
    left: "SizeExpr"
    right: "SizeExpr"


@dataclass(frozen=True)
class Div:
    left: "SizeExpr"
    right: "SizeExpr"


@dataclass(frozen=True)
class SMin:
    left: "SizeExpr"
    right: "SizeExpr"


SizeExpr = Union[Num, Infinity, SVar, Add, Sub, Mul, Div, SMin]

INF = Infinity()
ONE = Num(1)
ZERO = Num(0)


def free_size_vars(e: SizeExpr) -> set[str]:
    match e:
        case Num() | Infinity():
            return set()
        case SVar(name):
            return {name}
        case Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | SMin(a, b):
            return free_size_vars(a) | free_size_vars(b)
    raise TypeError(f"not a size expression: {e!r}")


def subst_size(e: SizeExpr, var: str, repl: SizeExpr) -> SizeExpr:
    match e:
        case Num() | Infinity():
            return e
        case SVar(name):
            return repl if name == var else e
        case Add(a, b):
            return Add(subst_size(a, var, repl), subst_size(b, var, repl))
        case Sub(a, b):
            return Sub(subst_size(a, var, repl), subst_size(b, var, repl))
        case Mul(a, b):
            return Mul(subst_size(a, var, repl), subst_size(b, var, repl))
        case Div(a, b):
            return Div(subst_size(a, var, repl), subst_size(b, var, repl))
        case SMin(a, b):
            return SMin(subst_size(a, var, repl), subst_size(b, var, repl))
    raise TypeError(f"not a size expression: {e!r}")


# ---------------------------------------------------------------------------
# Kinds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TypeKind:
    pass


@dataclass(frozen=True)
class SizeKind:
    bound: SizeExpr


@dataclass(frozen=True)
class ChannelKind:
    delay: int  # 0 or 1
    limit: SizeExpr

    def __post_init__(self):
        if self.delay not in (0, 1):
            raise ValueError("channel delay flag is 0 or 1")


@dataclass(frozen=True)
class ChannelArrayKind:
    delay: int
    limit: SizeExpr
    bound: SizeExpr  # number of channels in the array

    def __post_init__(self):
        if self.delay not in (0, 1):
            raise ValueError("channel delay flag is 0 or 1")


Kind = Union[TypeKind, SizeKind, ChannelKind, ChannelArrayKind]


# ---------------------------------------------------------------------------
# Simple types and channel value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoolType:
    pass


@dataclass(frozen=True)
class IntType:
    pass


@dataclass(frozen=True)
class SizeType:
    witness: SizeExpr


@dataclass(frozen=True)
class IndexType:
    witness: SizeExpr


@dataclass(frozen=True)
class RefType:
    payload: "SimpleType"


@dataclass(frozen=True)
class ProcType:
    params: tuple["SimpleType", ...]
    latent: "ActorFlow"   # communications performed by the body
    rest: "ActorFlow"     # annotation for the caller's continuation
    result: "SimpleType"


SimpleType = Union[BoolType, IntType, SizeType, IndexType, RefType, ProcType]

# Polarities: "+" receive, "-" send, "+-" both (duplex network instantiation).
POLARITIES = ("+", "-", "+-")


@dataclass(frozen=True)
class ChanType:
    polarity: str
    name: str            # type-level channel name
    payload: SimpleType

    def __post_init__(self):
        if self.polarity not in POLARITIES:
            raise ValueError(f"bad polarity {self.polarity!r}")


@dataclass(frozen=True)
class ChanArrayType:
    polarity: str
    name: str
    payload: SimpleType
    bound: SizeExpr

    def __post_init__(self):
        if self.polarity not in POLARITIES:
            raise ValueError(f"bad polarity {self.polarity!r}")


ValueType = Union[SimpleType, ChanType, ChanArrayType]


# ---------------------------------------------------------------------------
# Events, iterators, guards, flowstates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    chan: str
    is_send: bool
    index: Optional[SizeExpr] = None  # None for plain channels

    def complement(self) -> "Event":
        return Event(self.chan, not self.is_send, self.index)


@dataclass(frozen=True)
class Iterator:
    var: str
    lo: SizeExpr
    hi: SizeExpr


@dataclass(frozen=True)
class Divides:
    divisor: SizeExpr
    var: str


@dataclass(frozen=True)
class AtMost:
    var: str
    bound: SizeExpr


Guard = Union[Divides, AtMost]


@dataclass(frozen=True)
class FEmpty:
    pass


@dataclass(frozen=True)
class Comp:
    event: Event
    iterators: tuple[Iterator, ...] = ()
    guards: tuple[Guard, ...] = ()


@dataclass(frozen=True)
class FSeq:
    left: "ActorFlow"
    right: "ActorFlow"


ActorFlow = Union[FEmpty, Comp, FSeq]

EMPTY_FLOW = FEmpty()


def seq_flow(*parts: ActorFlow) -> ActorFlow:
    """Sequence flows, dropping empty components."""
    items = [p for p in parts if not isinstance(p, FEmpty)]
    if not items:
        return EMPTY_FLOW
    out = items[0]
    for p in items[1:]:
        out = FSeq(out, p)
    return out


def flow_comps(fs: ActorFlow) -> list[Comp]:
    """Flatten an actor flowstate into its sequence of comprehensions."""
    match fs:
        case FEmpty():
            return []
        case Comp():
            return [fs]
        case FSeq(a, b):
            return flow_comps(a) + flow_comps(b)
    raise TypeError(f"not an actor flowstate: {fs!r}")


@dataclass(frozen=True)
class PEmpty:
    pass


@dataclass(frozen=True)
class PActor:
    flow: ActorFlow


@dataclass(frozen=True)
class PArray:
    var: str
    lo: SizeExpr
    hi: SizeExpr
    body: ActorFlow


@dataclass(frozen=True)
class PPar:
    left: "ProcFlow"
    right: "ProcFlow"


ProcFlow = Union[PEmpty, PActor, PArray, PPar]


def par_flow(*parts: ProcFlow) -> ProcFlow:
    items = [p for p in parts if not isinstance(p, PEmpty)]
    if not items:
        return PEmpty()
    out = items[0]
    for p in items[1:]:
        out = PPar(out, p)
    return out


def proc_flow_components(fs: ProcFlow) -> list[ProcFlow]:
    """Flatten parallel structure, dropping empty components."""
    match fs:
        case PEmpty():
            return []
        case PActor(flow) if isinstance(flow, FEmpty):
            return []
        case PActor() | PArray():
            return [fs]
        case PPar(a, b):
            return proc_flow_components(a) + proc_flow_components(b)
    raise TypeError(f"not a process flowstate: {fs!r}")


# --- flowstate variable handling -------------------------------------------

def flow_free_vars(fs: ActorFlow) -> set[str]:
    """Type variables occurring free in a flowstate (channels included)."""
    out: set[str] = set()
    for comp in flow_comps(fs):
        bound: set[str] = set()
        for it in comp.iterators:
            out |= free_size_vars(it.lo) - bound
            out |= free_size_vars(it.hi) - bound
            bound.add(it.var)
        out.add(comp.event.chan)
        if comp.event.index is not None:
            out |= free_size_vars(comp.event.index) - bound
        for g in comp.guards:
            match g:
                case Divides(divisor, var):
                    out |= free_size_vars(divisor) - bound
                    if var not in bound:
                        out.add(var)
                case AtMost(var, b):
                    out |= free_size_vars(b) - bound
                    if var not in bound:
                        out.add(var)
    return out


_fresh_counter = itertools.count()


def fresh_var(base: str, avoid: set[str]) -> str:
    if base not in avoid:
        return base
    while True:
        cand = f"{base}_{next(_fresh_counter)}"
        if cand not in avoid:
            return cand


def _subst_guard(g: Guard, var: str, repl: SizeExpr) -> Guard:
    match g:
        case Divides(divisor, v):
            d = subst_size(divisor, var, repl)
            if v == var:
                if isinstance(repl, SVar):
                    return Divides(d, repl.name)
                if isinstance(repl, Num):
                    # numeric guard operand, kept as a degenerate divisor pair
                    return NumGuard("|", d, repl)
                raise ValueError("guard variable replaced by compound size")
            return Divides(d, v)
        case AtMost(v, bound):
            b = subst_size(bound, var, repl)
            if v == var:
                if isinstance(repl, SVar):
                    return AtMost(repl.name, b)
                if isinstance(repl, Num):
                    return NumGuard("<=", repl, b)
                raise ValueError("guard variable replaced by compound size")
            return AtMost(v, b)
        case NumGuard(op, l, r):
            return NumGuard(op, subst_size(l, var, repl), subst_size(r, var, repl))
    raise TypeError(f"not a guard: {g!r}")


@dataclass(frozen=True)
class NumGuard:
    """Guard whose variable slot has been instantiated to a number.

    Arises only during flowstate reduction, when a comprehension iterator is
    unrolled and its variable is substituted into the guards.
    """
    op: str  # "|" or "<="
    left: SizeExpr
    right: SizeExpr


def subst_comp(comp: Comp, var: str, repl: SizeExpr) -> Comp:
    """Capture-avoiding substitution into one comprehension."""
    binders = [it.var for it in comp.iterators]
    if var in binders:
        # bound occurrence: substitute only in bounds up to the shadowing binder
        new_iters = []
        shadowed = False
        for it in comp.iterators:
            if shadowed:
                new_iters.append(it)
            else:
                new_iters.append(Iterator(it.var, subst_size(it.lo, var, repl),
                                          subst_size(it.hi, var, repl)))
            if it.var == var:
                shadowed = True
        return Comp(comp.event, tuple(new_iters), comp.guards)
    avoid = free_size_vars(repl) | {var}
    event, iterators, guards = comp.event, list(comp.iterators), list(comp.guards)
    for i, it in enumerate(iterators):
        if it.var in avoid:
            new_name = fresh_var(it.var, avoid | {x.var for x in iterators})
            ev2, iters2, guards2 = _rename_binder(event, iterators, guards, i, new_name)
            event, iterators, guards = ev2, iters2, guards2
    new_iters = tuple(Iterator(it.var, subst_size(it.lo, var, repl),
                               subst_size(it.hi, var, repl)) for it in iterators)
    new_event = Event(event.chan, event.is_send,
                      None if event.index is None else subst_size(event.index, var, repl))
    new_guards = tuple(_subst_guard(g, var, repl) for g in guards)
    return Comp(new_event, new_iters, new_guards)


def _rename_binder(event, iterators, guards, idx, new_name):
    old = iterators[idx].var
    new_iters = list(iterators)
    new_iters[idx] = Iterator(new_name, iterators[idx].lo, iterators[idx].hi)
    for j in range(idx + 1, len(new_iters)):
        it = new_iters[j]
        new_iters[j] = Iterator(it.var, subst_size(it.lo, old, SVar(new_name)),
                                subst_size(it.hi, old, SVar(new_name)))
    new_event = Event(event.chan, event.is_send,
                      None if event.index is None
                      else subst_size(event.index, old, SVar(new_name)))
    new_guards = [_subst_guard(g, old, SVar(new_name)) for g in guards]
    return new_event, new_iters, new_guards


def subst_flow(fs: ActorFlow, var: str, repl: SizeExpr) -> ActorFlow:
    match fs:
        case FEmpty():
            return fs
        case Comp():
            return subst_comp(fs, var, repl)
        case FSeq(a, b):
            return FSeq(subst_flow(a, var, repl), subst_flow(b, var, repl))
    raise TypeError(f"not an actor flowstate: {fs!r}")


def subst_proc_flow(fs: ProcFlow, var: str, repl: SizeExpr) -> ProcFlow:
    match fs:
        case PEmpty():
            return fs
        case PActor(flow):
            return PActor(subst_flow(flow, var, repl))
        case PArray(v, lo, hi, body):
            lo2 = subst_size(lo, var, repl)
            hi2 = subst_size(hi, var, repl)
            if v == var:
                return PArray(v, lo2, hi2, body)
            if v in free_size_vars(repl):
                new = fresh_var(v, free_size_vars(repl) | {var})
                body = subst_flow(body, v, SVar(new))
                v = new
            return PArray(v, lo2, hi2, subst_flow(body, var, repl))
        case PPar(a, b):
            return PPar(subst_proc_flow(a, var, repl), subst_proc_flow(b, var, repl))
    raise TypeError(f"not a process flowstate: {fs!r}")


# ---------------------------------------------------------------------------
# Environments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TypeEnv:
    items: tuple[tuple[str, Kind], ...] = ()

    def lookup(self, name: str) -> Optional[Kind]:
        for n, k in reversed(self.items):
            if n == name:
                return k
        return None

    def extend(self, name: str, kind: Kind) -> "TypeEnv":
        return TypeEnv(self.items + ((name, kind),))

    def __contains__(self, name: str) -> bool:
        return self.lookup(name) is not None

    def names(self) -> list[str]:
        return [n for n, _ in self.items]


@dataclass(frozen=True)
class ValueEnv:
    items: tuple[tuple[str, ValueType], ...] = ()

    def lookup(self, name: str) -> Optional[ValueType]:
        for n, t in reversed(self.items):
            if n == name:
                return t
        return None

    def extend(self, name: str, ty: ValueType) -> "ValueEnv":
        return ValueEnv(self.items + ((name, ty),))

    def __contains__(self, name: str) -> bool:
        return self.lookup(name) is not None


# ---------------------------------------------------------------------------
# Expressions, processes, networks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntLit:
    value: int
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class BoolLit:
    value: bool
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class Var:
    name: str
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class MkSize:
    arg: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class FromSize:
    arg: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class MkIndex:
    arg: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class FromIndex:
    arg: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class Lam:
    params: tuple[tuple[str, SimpleType], ...]
    latent: ActorFlow
    rest: ActorFlow
    body: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class App:
    fn: "Expr"
    args: tuple["Expr", ...]
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class Let:
    var: str
    bound: "Expr"
    body: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class SeqE:
    first: "Expr"
    second: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class If:
    cond: "Expr"
    then: "Expr"
    els: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class When:
    lhs: "Expr"
    op: str  # "|" or "<="
    rhs: "Expr"
    body: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class For:
    tvar: str        # type-level witness for the loop index
    var: str         # value-level loop index
    lo: int          # literal lower bound
    bound: "Expr"    # size-typed upper bound
    body: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class NewRef:
    init: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class Deref:
    target: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class Assign:
    target: "Expr"
    value: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class Recv:
    chan: str
    index: Optional["Expr"] = None
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class Send:
    chan: str
    index: Optional["Expr"]
    payload: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / == <= <
    lhs: "Expr"
    rhs: "Expr"
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class LocRef:
    """Heap location; appears only during evaluation, never in source."""
    actor: str
    slot: int
    loc: Optional[Loc] = _loc_field()


Expr = Union[IntLit, BoolLit, Var, MkSize, FromSize, MkIndex, FromIndex, Lam,
             App, Let, SeqE, If, When, For, NewRef, Deref, Assign, Recv, Send,
             BinOp, LocRef]


@dataclass(frozen=True)
class Stop:
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class ActorE:
    expr: Expr
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class ActorComp:
    tvar: str
    var: str
    lo: int          # literal lower bound
    hi: Expr         # size-typed value (literal or declared name)
    body: Expr
    loc: Optional[Loc] = _loc_field()


@dataclass(frozen=True)
class Par:
    left: "Proc"
    right: "Proc"
    loc: Optional[Loc] = _loc_field()


Proc = Union[Stop, ActorE, ActorComp, Par]


@dataclass(frozen=True)
class Network:
    tenv: TypeEnv
    venv: ValueEnv
    flow: ProcFlow
    body: Proc


def proc_components(p: Proc) -> list[Proc]:
    match p:
        case Par(a, b):
            return proc_components(a) + proc_components(b)
        case _:
            return [p]


# --- value-level substitution ----------------------------------------------

def is_value(e: Expr) -> bool:
    match e:
        case IntLit() | BoolLit() | Lam() | LocRef():
            return True
        case Var():
            # surviving free names denote channels, which are atomic values
            return True
        case MkSize(arg) | MkIndex(arg):
            return is_value(arg)
        case _:
            return False


def expr_free_vars(e: Expr) -> set[str]:
    match e:
        case IntLit() | BoolLit() | LocRef():
            return set()
        case Var(name):
            return {name}
        case MkSize(a) | FromSize(a) | MkIndex(a) | FromIndex(a) | NewRef(a) | Deref(a):
            return expr_free_vars(a)
        case Lam(params, _, _, body):
            return expr_free_vars(body) - {p for p, _ in params}
        case App(fn, args):
            out = expr_free_vars(fn)
            for a in args:
                out |= expr_free_vars(a)
            return out
        case Let(var, bound, body):
            return expr_free_vars(bound) | (expr_free_vars(body) - {var})
        case SeqE(a, b):
            return expr_free_vars(a) | expr_free_vars(b)
        case If(c, t, f):
            return expr_free_vars(c) | expr_free_vars(t) | expr_free_vars(f)
        case When(l, _, r, body):
            return expr_free_vars(l) | expr_free_vars(r) | expr_free_vars(body)
        case For(_, var, _, bound, body):
            return expr_free_vars(bound) | (expr_free_vars(body) - {var})
        case Assign(t, v):
            return expr_free_vars(t) | expr_free_vars(v)
        case Recv(chan, index):
            out = {chan}
            if index is not None:
                out |= expr_free_vars(index)
            return out
        case Send(chan, index, payload):
            out = {chan} | expr_free_vars(payload)
            if index is not None:
                out |= expr_free_vars(index)
            return out
        case BinOp(_, l, r):
            return expr_free_vars(l) | expr_free_vars(r)
    raise TypeError(f"not an expression: {e!r}")


def subst_expr(e: Expr, mapping: dict[str, Expr]) -> Expr:
    """Capture-avoiding substitution of values for variables.

    Replacement terms are values, whose free names are channel names; those
    can never be captured because binders never shadow channel declarations
    in well-formed programs, so binder renaming is not needed here.
    """
    if not mapping:
        return e
    match e:
        case IntLit() | BoolLit() | LocRef():
            return e
        case Var(name):
            return mapping.get(name, e)
        case MkSize(a):
            return MkSize(subst_expr(a, mapping))
        case FromSize(a):
            return FromSize(subst_expr(a, mapping))
        case MkIndex(a):
            return MkIndex(subst_expr(a, mapping))
        case FromIndex(a):
            return FromIndex(subst_expr(a, mapping))
        case Lam(params, latent, rest, body):
            inner = {k: v for k, v in mapping.items()
                     if k not in {p for p, _ in params}}
            return Lam(params, latent, rest, subst_expr(body, inner))
        case App(fn, args):
            return App(subst_expr(fn, mapping),
                       tuple(subst_expr(a, mapping) for a in args))
        case Let(var, bound, body):
            inner = {k: v for k, v in mapping.items() if k != var}
            return Let(var, subst_expr(bound, mapping), subst_expr(body, inner))
        case SeqE(a, b):
            return SeqE(subst_expr(a, mapping), subst_expr(b, mapping))
        case If(c, t, f):
            return If(subst_expr(c, mapping), subst_expr(t, mapping),
                      subst_expr(f, mapping))
        case When(l, op, r, body):
            return When(subst_expr(l, mapping), op, subst_expr(r, mapping),
                        subst_expr(body, mapping))
        case For(tvar, var, lo, bound, body):
            inner = {k: v for k, v in mapping.items() if k != var}
            return For(tvar, var, lo, subst_expr(bound, mapping),
                       subst_expr(body, inner))
        case NewRef(a):
            return NewRef(subst_expr(a, mapping))
        case Deref(a):
            return Deref(subst_expr(a, mapping))
        case Assign(t, v):
            return Assign(subst_expr(t, mapping), subst_expr(v, mapping))
        case Recv(chan, index):
            return Recv(chan, None if index is None else subst_expr(index, mapping))
        case Send(chan, index, payload):
            return Send(chan, None if index is None else subst_expr(index, mapping),
                        subst_expr(payload, mapping))
        case BinOp(op, l, r):
            return BinOp(op, subst_expr(l, mapping), subst_expr(r, mapping))
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    rule: str
    message: str
    loc: Optional[Loc] = None

    def __str__(self):
        where = f" at {self.loc[0]}:{self.loc[1]}" if self.loc else ""
        return f"[{self.rule}]{where} {self.message}"


class SizeArithmeticError(Exception):
    """Raised for ill-defined size arithmetic, e.g. division by zero."""
