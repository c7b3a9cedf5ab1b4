"""Heap-based small-step execution of instantiated networks.

Channels live on a shared heap as bounded FIFO buffers keyed by their
type-level names; channel arrays are 1-indexed families of buffers, matching
the 1-based iteration ranges that produce their indices.  Actors take turns
under a scheduler; a send on a full buffer or a receive on an empty one is
simply not enabled, and a configuration where no actor can step while some
are unfinished is a deadlock.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .kinding import eval_size, is_inf
from .syntax import (
    ActorComp, ActorE, App, Assign, BinOp, BoolLit, BoolType, ChanArrayType,
    ChannelArrayKind, ChannelKind, ChanType, Deref, Diagnostic, Expr, For,
    FromIndex, FromSize, If, IntLit, IntType, Lam, Let, LocRef, MkIndex,
    MkSize, Network, NewRef, Recv, Send, SeqE, SizeKind, SizeType, Stop,
    TypeEnv, ValueEnv, When, is_value, proc_components, subst_expr,
)


class InstantiationError(Exception):
    def __init__(self, diag: Diagnostic):
        super().__init__(str(diag))
        self.diag = diag


@dataclass(frozen=True)
class Label:
    """Communication label; internal steps carry no label."""
    chan: str            # type-level channel name
    is_send: bool
    index: Optional[int] = None  # numeric element for channel arrays

    def __str__(self):
        idx = f"[{self.index}]" if self.index is not None else ""
        return f"{self.chan}{idx}{'!' if self.is_send else '?'}"


@dataclass
class Heap:
    locs: dict = field(default_factory=dict)        # (actor, slot) -> value
    chans: dict = field(default_factory=dict)       # name -> tuple(values)
    caps: dict = field(default_factory=dict)        # name -> capacity
    arrays: dict = field(default_factory=dict)      # name -> {index -> tuple}
    arr_caps: dict = field(default_factory=dict)    # name -> capacity
    next_slot: dict = field(default_factory=dict)   # actor -> counter

    def copy(self) -> "Heap":
        return Heap(dict(self.locs), dict(self.chans), self.caps,
                    {k: dict(v) for k, v in self.arrays.items()},
                    self.arr_caps, dict(self.next_slot))

    def push(self, chan: str, value) -> None:
        buf = self.chans[chan]
        assert len(buf) < self.caps[chan], f"buffer overflow on {chan}"
        self.chans[chan] = buf + (value,)

    def pop(self, chan: str):
        buf = self.chans[chan]
        self.chans[chan] = buf[1:]
        return buf[0]

    def push_elem(self, chan: str, idx: int, value) -> None:
        buf = self.arrays[chan][idx]
        assert len(buf) < self.arr_caps[chan], f"buffer overflow on {chan}[{idx}]"
        self.arrays[chan][idx] = buf + (value,)

    def pop_elem(self, chan: str, idx: int):
        buf = self.arrays[chan][idx]
        self.arrays[chan][idx] = buf[1:]
        return buf[0]

    def alloc(self, actor: str, value) -> LocRef:
        slot = self.next_slot.get(actor, 0)
        self.next_slot[actor] = slot + 1
        self.locs[(actor, slot)] = value
        return LocRef(actor, slot)

    def freeze(self) -> tuple:
        return (
            tuple(sorted(self.locs.items())),
            tuple(sorted(self.chans.items())),
            tuple(sorted((n, tuple(sorted(d.items())))
                         for n, d in self.arrays.items())),
        )

    def buffer_sizes(self) -> dict:
        out = {n: len(b) for n, b in self.chans.items()}
        for n, d in self.arrays.items():
            out[n] = [len(d[k]) for k in sorted(d)]
        return out


@dataclass
class Actor:
    name: str
    expr: Union[Expr, None]  # None encodes `stop`

    @property
    def done(self) -> bool:
        return self.expr is None or is_value(self.expr)


@dataclass
class Configuration:
    actors: list[Actor]
    heap: Heap
    venv: ValueEnv
    tenv: TypeEnv
    sizes: dict

    def done(self) -> bool:
        return all(a.done for a in self.actors)

    def copy(self) -> "Configuration":
        return Configuration([Actor(a.name, a.expr) for a in self.actors],
                             self.heap.copy(), self.venv, self.tenv, self.sizes)

    def state_key(self) -> tuple:
        return (tuple(a.expr for a in self.actors), self.heap.freeze())


# ---------------------------------------------------------------------------
# Instantiation
# ---------------------------------------------------------------------------

def _default_value(ty) -> Expr:
    if isinstance(ty, BoolType):
        return BoolLit(False)
    return IntLit(0)


def _payload_type(venv: ValueEnv, tname: str):
    for _, ty in venv.items:
        if isinstance(ty, (ChanType, ChanArrayType)) and ty.name == tname:
            return ty.payload
    return IntType()


def _eval_quantity(e, sizes: dict, what: str) -> int:
    v = eval_size(e, sizes)
    if is_inf(v):
        raise InstantiationError(Diagnostic(
            "Kind Chan", f"{what} is unbounded and cannot be instantiated"))
    return v


def instantiate(net: Network, sizes: dict[str, int]) -> Configuration:
    """Build the initial configuration: one buffer per channel, delay
    channels prefilled to capacity, actor comprehensions unrolled."""
    for name, kind in net.tenv.items:
        if isinstance(kind, SizeKind) and name not in sizes:
            raise InstantiationError(Diagnostic(
                "Kind Size", f"missing size parameter {name}"))
    for name, value in sizes.items():
        if value < 1:
            raise InstantiationError(Diagnostic(
                "Kind Size", f"size parameter {name} must be positive"))

    heap = Heap()
    for name, kind in net.tenv.items:
        if isinstance(kind, ChannelKind):
            cap = _eval_quantity(kind.limit, sizes, f"capacity of {name}")
            if cap < 1:
                raise InstantiationError(Diagnostic(
                    "Kind Chan", f"channel {name} has zero capacity"))
            fill = cap if kind.delay else 0
            default = _default_value(_payload_type(net.venv, name))
            heap.chans[name] = tuple(default for _ in range(fill))
            heap.caps[name] = cap
        elif isinstance(kind, ChannelArrayKind):
            cap = _eval_quantity(kind.limit, sizes, f"capacity of {name}")
            bound = _eval_quantity(kind.bound, sizes, f"bound of {name}")
            if cap < 1:
                raise InstantiationError(Diagnostic(
                    "Kind Chan Array", f"channel array {name} has zero capacity"))
            fill = cap if kind.delay else 0
            default = _default_value(_payload_type(net.venv, name))
            heap.arrays[name] = {k: tuple(default for _ in range(fill))
                                 for k in range(1, bound + 1)}
            heap.arr_caps[name] = cap

    # instantiations must respect declared upper bounds
    for name, kind in net.tenv.items:
        if isinstance(kind, SizeKind) and name in sizes:
            bound = eval_size(kind.bound, sizes)
            if not is_inf(bound) and sizes[name] > bound:
                raise InstantiationError(Diagnostic(
                    "Size Bound",
                    f"size {name}={sizes[name]} exceeds its declared bound "
                    f"{bound}"))

    # value-level size parameters become size constants
    params: dict[str, Expr] = {}
    for name, ty in net.venv.items:
        if isinstance(ty, SizeType):
            params[name] = MkSize(IntLit(_eval_quantity(
                ty.witness, sizes, f"value of {name}")))

    actors: list[Actor] = []
    for i, part in enumerate(proc_components(net.body)):
        match part:
            case Stop():
                actors.append(Actor(f"a{i}", None))
            case ActorE(expr):
                actors.append(Actor(f"a{i}", subst_expr(expr, params)))
            case ActorComp(tvar, var, lo, hi, body):
                hi_expr = subst_expr(hi, params)
                match hi_expr:
                    case MkSize(IntLit(value=v)):
                        hi_n = v
                    case _:
                        raise InstantiationError(Diagnostic(
                            "Proc Comp", "actor-array bound did not evaluate"))
                body = subst_expr(body, params)
                for k in range(lo, hi_n + 1):
                    actors.append(Actor(
                        f"a{i}[{k}]",
                        subst_expr(body, {var: MkIndex(IntLit(k))})))
            case _:
                raise TypeError(f"unexpected process form {part!r}")
    return Configuration(actors, heap, net.venv, net.tenv, dict(sizes))


# ---------------------------------------------------------------------------
# Small-step reduction
# ---------------------------------------------------------------------------

@dataclass
class Stepped:
    expr: Expr
    label: Optional[Label] = None
    effect: Optional[Callable] = None  # applied to a heap copy when committed


@dataclass
class Blocked:
    reason: str


@dataclass
class Stuck:
    reason: str


def _as_int(v: Expr) -> Optional[int]:
    match v:
        case IntLit(n):
            return n
        case MkSize(IntLit(n)) | MkIndex(IntLit(n)):
            return n
        case _:
            return None


def _rel_holds(op: str, a: int, b: int) -> bool:
    if op == "|":
        return b % a == 0 if a != 0 else b == 0
    if op == "<=":
        return a <= b
    raise ValueError(f"unknown guard operator {op}")


def step_expr(e: Expr, heap: Heap, actor: str, venv: ValueEnv
              ) -> Union[Stepped, Blocked, Stuck, None]:
    """One reduction of `e`, or None when `e` is a value.  Heap changes are
    returned as an effect thunk so schedulers can probe without committing."""
    if is_value(e):
        return None
    match e:
        case SeqE(first, second):
            if is_value(first):
                return Stepped(second)
            return _in_context(first, heap, actor, venv,
                               lambda f: SeqE(f, second))
        case Let(var, bound, body):
            if is_value(bound):
                return Stepped(subst_expr(body, {var: bound}))
            return _in_context(bound, heap, actor, venv,
                               lambda b: Let(var, b, body))
        case App(fn, args):
            if not is_value(fn):
                return _in_context(fn, heap, actor, venv,
                                   lambda f: App(f, args))
            for i, a in enumerate(args):
                if not is_value(a):
                    return _in_context(
                        a, heap, actor, venv,
                        lambda x, i=i: App(fn, args[:i] + (x,) + args[i + 1:]))
            if not isinstance(fn, Lam) or len(fn.params) != len(args):
                return Stuck("calling a non-procedure")
            mapping = {name: arg for (name, _), arg in zip(fn.params, args)}
            return Stepped(subst_expr(fn.body, mapping))
        case If(cond, then, els):
            if not is_value(cond):
                return _in_context(cond, heap, actor, venv,
                                   lambda c: If(c, then, els))
            match cond:
                case BoolLit(True):
                    return Stepped(then)
                case BoolLit(False):
                    return Stepped(els)
                case _:
                    return Stuck("condition did not evaluate to a Boolean")
        case When(lhs, op, rhs, body):
            if not is_value(lhs):
                return _in_context(lhs, heap, actor, venv,
                                   lambda l: When(l, op, rhs, body))
            if not is_value(rhs):
                return _in_context(rhs, heap, actor, venv,
                                   lambda r: When(lhs, op, r, body))
            a, b = _as_int(lhs), _as_int(rhs)
            if a is None or b is None:
                return Stuck("guard operands are not numeric")
            return Stepped(body if _rel_holds(op, a, b) else IntLit(0))
        case For(tvar, var, lo, bound, body):
            if not is_value(bound):
                return _in_context(bound, heap, actor, venv,
                                   lambda b: For(tvar, var, lo, b, body))
            n = _as_int(bound)
            if n is None:
                return Stuck("loop bound is not a size value")
            if lo > n:
                return Stepped(IntLit(0))
            unrolled = SeqE(subst_expr(body, {var: MkIndex(IntLit(lo))}),
                            For(tvar, var, lo + 1, bound, body))
            return Stepped(unrolled)
        case FromSize(arg):
            if not is_value(arg):
                return _in_context(arg, heap, actor, venv, FromSize)
            match arg:
                case MkSize(IntLit(n)):
                    return Stepped(IntLit(n))
                case _:
                    return Stuck("fromSize of a non-size value")
        case FromIndex(arg):
            if not is_value(arg):
                return _in_context(arg, heap, actor, venv, FromIndex)
            match arg:
                case MkIndex(IntLit(n)):
                    return Stepped(IntLit(n))
                case _:
                    return Stuck("fromIndex of a non-index value")
        case MkSize(arg):
            return _in_context(arg, heap, actor, venv, MkSize)
        case MkIndex(arg):
            return _in_context(arg, heap, actor, venv, MkIndex)
        case NewRef(init):
            if not is_value(init):
                return _in_context(init, heap, actor, venv, NewRef)
            slot = heap.next_slot.get(actor, 0)
            ref = LocRef(actor, slot)

            def effect(h: Heap, init=init):
                h.alloc(actor, init)
            return Stepped(ref, effect=effect)
        case Deref(target):
            if not is_value(target):
                return _in_context(target, heap, actor, venv, Deref)
            if not isinstance(target, LocRef):
                return Stuck("dereferencing a non-reference")
            return Stepped(heap.locs[(target.actor, target.slot)])
        case Assign(target, value):
            if not is_value(target):
                return _in_context(target, heap, actor, venv,
                                   lambda t: Assign(t, value))
            if not is_value(value):
                return _in_context(value, heap, actor, venv,
                                   lambda v: Assign(target, v))
            if not isinstance(target, LocRef):
                return Stuck("assignment to a non-reference")

            def effect(h: Heap, target=target, value=value):
                h.locs[(target.actor, target.slot)] = value
            return Stepped(value, effect=effect)
        case BinOp(op, lhs, rhs):
            if not is_value(lhs):
                return _in_context(lhs, heap, actor, venv,
                                   lambda l: BinOp(op, l, rhs))
            if not is_value(rhs):
                return _in_context(rhs, heap, actor, venv,
                                   lambda r: BinOp(op, lhs, r))
            a, b = _as_int(lhs), _as_int(rhs)
            if a is None or b is None:
                return Stuck(f"operator {op} on non-integers")
            if op == "+":
                return Stepped(IntLit(a + b))
            if op == "-":
                return Stepped(IntLit(a - b))
            if op == "*":
                return Stepped(IntLit(a * b))
            if op == "/":
                if b == 0:
                    return Stuck("division by zero")
                return Stepped(IntLit(a // b))
            if op == "==":
                return Stepped(BoolLit(a == b))
            if op == "<=":
                return Stepped(BoolLit(a <= b))
            if op == "<":
                return Stepped(BoolLit(a < b))
            return Stuck(f"unknown operator {op}")
        case Send(chan, index, payload):
            return _step_send(e, heap, actor, venv)
        case Recv(chan, index):
            return _step_recv(e, heap, actor, venv)
    raise TypeError(f"cannot step {e!r}")


def _in_context(inner: Expr, heap: Heap, actor: str, venv: ValueEnv,
                rebuild: Callable[[Expr], Expr]):
    out = step_expr(inner, heap, actor, venv)
    if isinstance(out, Stepped):
        return Stepped(rebuild(out.expr), out.label, out.effect)
    return out


def _step_send(e: Send, heap: Heap, actor: str, venv: ValueEnv):
    ty = venv.lookup(e.chan)
    if e.index is not None and not is_value(e.index):
        return _in_context(e.index, heap, actor, venv,
                           lambda i: Send(e.chan, i, e.payload))
    if not is_value(e.payload):
        return _in_context(e.payload, heap, actor, venv,
                           lambda p: Send(e.chan, e.index, p))
    if isinstance(ty, ChanType):
        tname = ty.name
        if len(heap.chans[tname]) >= heap.caps[tname]:
            return Blocked(f"buffer {tname} is full")

        def effect(h: Heap, payload=e.payload):
            h.push(tname, payload)
        return Stepped(IntLit(0), Label(tname, True), effect)
    if isinstance(ty, ChanArrayType):
        tname = ty.name
        idx = _as_int(e.index)
        if idx is None:
            return Stuck("array index is not an index value")
        if idx not in heap.arrays[tname]:
            return Stuck(f"index {idx} outside channel array {tname}")
        if len(heap.arrays[tname][idx]) >= heap.arr_caps[tname]:
            return Blocked(f"buffer {tname}[{idx}] is full")

        def effect(h: Heap, payload=e.payload, idx=idx):
            h.push_elem(tname, idx, payload)
        return Stepped(IntLit(0), Label(tname, True, idx), effect)
    return Stuck(f"{e.chan} is not bound to a channel")


def _step_recv(e: Recv, heap: Heap, actor: str, venv: ValueEnv):
    ty = venv.lookup(e.chan)
    if e.index is not None and not is_value(e.index):
        return _in_context(e.index, heap, actor, venv,
                           lambda i: Recv(e.chan, i))
    if isinstance(ty, ChanType):
        tname = ty.name
        if not heap.chans[tname]:
            return Blocked(f"buffer {tname} is empty")
        value = heap.chans[tname][0]

        def effect(h: Heap):
            h.pop(tname)
        return Stepped(value, Label(tname, False), effect)
    if isinstance(ty, ChanArrayType):
        tname = ty.name
        idx = _as_int(e.index)
        if idx is None:
            return Stuck("array index is not an index value")
        if idx not in heap.arrays[tname]:
            return Stuck(f"index {idx} outside channel array {tname}")
        if not heap.arrays[tname][idx]:
            return Blocked(f"buffer {tname}[{idx}] is empty")
        value = heap.arrays[tname][idx][0]

        def effect(h: Heap, idx=idx):
            h.pop_elem(tname, idx)
        return Stepped(value, Label(tname, False, idx), effect)
    return Stuck(f"{e.chan} is not bound to a channel")


# ---------------------------------------------------------------------------
# Running configurations
# ---------------------------------------------------------------------------

@dataclass
class TraceStep:
    step: int
    actor: str
    label: Optional[Label]
    buffer_sizes: dict

    def to_json(self) -> dict:
        label = {"kind": "internal"}
        if self.label is not None:
            label = {"kind": "send" if self.label.is_send else "recv",
                     "channel": self.label.chan}
            if self.label.index is not None:
                label["index"] = self.label.index
        return {"step": self.step, "actor": self.actor, "label": label,
                "bufferSizes": self.buffer_sizes}


@dataclass
class RunResult:
    status: str                      # "done" | "deadlock" | "error"
    trace: list[TraceStep]
    config: Configuration
    blocked: dict = field(default_factory=dict)   # actor -> reason on deadlock
    comm_counts: Counter = field(default_factory=Counter)

    @property
    def ok(self) -> bool:
        return self.status == "done"


def _actor_outcome(cfg: Configuration, i: int):
    actor = cfg.actors[i]
    if actor.done:
        return None
    return step_expr(actor.expr, cfg.heap, actor.name, cfg.venv)


def commit(cfg: Configuration, i: int, out: Stepped,
           drop_effect: bool = False) -> Configuration:
    new = cfg.copy()
    new.actors[i] = Actor(cfg.actors[i].name, out.expr)
    if out.effect is not None and not drop_effect:
        out.effect(new.heap)
    return new


@dataclass
class Fault:
    """Fault injection: skip the heap effect of the n-th send (1-based)."""
    drop_send: int


def run(cfg: Configuration, scheduler: str = "roundRobin", seed: int = 0,
        max_steps: int = 500_000, observer: Optional[Callable] = None,
        fault: Optional[Fault] = None) -> RunResult:
    cfg = cfg.copy()
    trace: list[TraceStep] = []
    counts: Counter = Counter()
    rng = random.Random(seed)
    rr = 0
    sends_seen = 0
    for step_no in range(max_steps):
        if cfg.done():
            return RunResult("done", trace, cfg, comm_counts=counts)
        candidates = []
        blocked: dict = {}
        for i in range(len(cfg.actors)):
            out = _actor_outcome(cfg, i)
            if isinstance(out, Stepped):
                candidates.append((i, out))
            elif isinstance(out, (Blocked, Stuck)):
                blocked[cfg.actors[i].name] = out.reason
        if not candidates:
            return RunResult("deadlock", trace, cfg, blocked, counts)
        if scheduler == "roundRobin":
            chosen = next((c for c in candidates if c[0] >= rr),
                          candidates[0])
            rr = (chosen[0] + 1) % len(cfg.actors)
        elif scheduler == "random":
            chosen = candidates[rng.randrange(len(candidates))]
        else:
            raise ValueError(f"unknown scheduler {scheduler}")
        i, out = chosen
        drop = False
        if out.label is not None and out.label.is_send:
            sends_seen += 1
            if fault is not None and sends_seen == fault.drop_send:
                drop = True
        before = cfg
        cfg = commit(cfg, i, out, drop_effect=drop)
        if out.label is not None:
            key = (out.label.chan, "send" if out.label.is_send else "recv")
            counts[key] += 1
        entry = TraceStep(len(trace), before.actors[i].name, out.label,
                          cfg.heap.buffer_sizes())
        trace.append(entry)
        if observer is not None:
            observer(entry, before, cfg)
    return RunResult("error", trace, cfg,
                     {"*": f"exceeded {max_steps} steps"}, counts)


# ---------------------------------------------------------------------------
# Exhaustive interleaving exploration
# ---------------------------------------------------------------------------

@dataclass
class ExploreResult:
    any_complete: bool
    all_complete: bool
    states: int
    terminals: set               # signatures of completed configurations
    stuck: list                  # sample stuck configurations
    truncated: bool = False

    @property
    def deterministic_outcome(self) -> bool:
        return len(self.terminals) <= 1


def _signature(cfg: Configuration, counts: tuple) -> tuple:
    return (tuple(sorted(cfg.heap.locs.items())), counts)


def explore(cfg: Configuration, max_states: int = 300_000,
            stuck_limit: int = 8) -> ExploreResult:
    """Visit every reachable interleaving, memoized on configuration plus
    per-channel communication counts."""
    visited: set = set()
    terminals: set = set()
    stuck: list = []
    any_complete = False
    all_complete = True
    truncated = False
    stack = [(cfg.copy(), Counter())]
    while stack:
        current, counts = stack.pop()
        key = (current.state_key(), tuple(sorted(counts.items())))
        if key in visited:
            continue
        visited.add(key)
        if len(visited) > max_states:
            truncated = True
            break
        outs = []
        for i in range(len(current.actors)):
            out = _actor_outcome(current, i)
            if isinstance(out, Stepped):
                outs.append((i, out))
        if not outs:
            if current.done():
                any_complete = True
                terminals.add(_signature(current, tuple(sorted(counts.items()))))
            else:
                all_complete = False
                if len(stuck) < stuck_limit:
                    stuck.append(current)
            continue
        for i, out in outs:
            nxt = commit(current, i, out)
            nc = Counter(counts)
            if out.label is not None:
                nc[(out.label.chan,
                    "send" if out.label.is_send else "recv")] += 1
            stack.append((nxt, nc))
    return ExploreResult(any_complete, all_complete and not truncated,
                         len(visited), terminals, stuck, truncated)
