"""Global network checks: determinism (single writer and reader per
channel) and progress (a deadlock-free firing order exists).

Progress is decided by searching for a derivation that drives every actor
flowstate to empty.  A producer event (send on an undelayed channel, or
receive on a delayed one) can always fire and leaves a record; a consumer
event fires only against a matching record left by another actor.  Within
one actor, comprehensions fire in program order: the analysis does not
track causality inside an actor, so its inputs are conservatively treated
as preconditions of its outputs.  Numeric comprehensions are expanded to
token counts so partial consumption works; symbolic comprehensions are
matched whole, up to renaming and bound normalization.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Union

from .flowstate import FlowstateError, fold_guards_comp, _comp_target, extent
from .kinding import normalize_size, size_leq
from .printer import print_comp, print_size
from .syntax import (
    Add, ChannelArrayKind, ChannelKind, Comp, Diagnostic, Event, Infinity,
    Iterator, Num, PActor, PArray, PPar, ProcFlow, SizeExpr, Sub, SVar,
    TypeEnv, flow_comps, subst_flow, proc_flow_components,
)

PRODUCER = "producer"
CONSUMER = "consumer"

_EXPAND_LIMIT = 1 << 16


def classify_event(tenv: TypeEnv, ev: Event) -> str:
    kind = tenv.lookup(ev.chan)
    if isinstance(kind, ChannelKind) or isinstance(kind, ChannelArrayKind):
        if ev.is_send:
            return PRODUCER if kind.delay == 0 else CONSUMER
        return PRODUCER if kind.delay == 1 else CONSUMER
    raise FlowstateError(Diagnostic(
        "FS Prog Prod", f"unbound channel {ev.chan}"))


def complement_event(ev: Event) -> Event:
    return ev.complement()


# ---------------------------------------------------------------------------
# Channel use sets
# ---------------------------------------------------------------------------
# elements: ("chan", t) | ("elem", t, k) | ("range", t, lo, hi)

def _comp_uses(comp: Comp, want_send: bool) -> set:
    ev = comp.event
    if ev.is_send != want_send:
        return set()
    if ev.index is None:
        return {("chan", ev.chan)}
    if comp.guards:
        raise FlowstateError(Diagnostic(
            "FS Det Par",
            f"guarded communication on channel array {ev.chan}"))
    idx = normalize_size(ev.index)
    if isinstance(idx, Num):
        return {("elem", ev.chan, idx.value)}
    if isinstance(idx, SVar):
        for it in comp.iterators:
            if it.var == idx.name:
                lo = normalize_size(it.lo)
                hi = normalize_size(it.hi)
                if isinstance(lo, Num) and isinstance(hi, Num):
                    return {("elem", ev.chan, k)
                            for k in range(lo.value, hi.value + 1)}
                return {("range", ev.chan, lo, hi)}
    return {("range", ev.chan, idx, idx)}


def _flow_uses(fs: ProcFlow, want_send: bool) -> set:
    uses: set = set()
    for part in proc_flow_components(fs):
        match part:
            case PActor(flow):
                for comp in flow_comps(flow):
                    uses |= _comp_uses(comp, want_send)
            case PArray(var, lo, hi, body):
                from .flowstate import distribute_iterator
                distributed = distribute_iterator(body, Iterator(var, lo, hi))
                for comp in flow_comps(distributed):
                    uses |= _comp_uses(comp, want_send)
    return uses


def inchans(fs: ProcFlow) -> set:
    return _flow_uses(fs, want_send=False)


def outchans(fs: ProcFlow) -> set:
    return _flow_uses(fs, want_send=True)


def _uses_overlap(env: TypeEnv, a, b) -> bool:
    """Conservative: overlapping unless provably disjoint."""
    if a[1] != b[1]:
        return False
    if a[0] == "chan" or b[0] == "chan":
        return a[0] == b[0]

    def as_range(u):
        if u[0] == "elem":
            return Num(u[2]), Num(u[2])
        return u[2], u[3]

    lo1, hi1 = as_range(a)
    lo2, hi2 = as_range(b)
    before = size_leq(env, Add(hi1, Num(1)), lo2)
    after = size_leq(env, Add(hi2, Num(1)), lo1)
    return not (before is True or after is True)


def _overlapping_pairs(env: TypeEnv, left: set, right: set) -> list:
    return [(a, b) for a in sorted(left) for b in sorted(right)
            if _uses_overlap(env, a, b)]


def check_determinism(tenv: TypeEnv, fs: ProcFlow) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def describe(u) -> str:
        if u[0] == "chan":
            return u[1]
        if u[0] == "elem":
            return f"{u[1]}[{u[2]}]"
        return f"{u[1]}[{print_size(u[2])}..{print_size(u[3])}]"

    def rec(f: ProcFlow):
        match f:
            case PPar(a, b):
                rec(a)
                rec(b)
                try:
                    for label, use in (("reads", inchans), ("writes", outchans)):
                        for ua, ub in _overlapping_pairs(tenv, use(a), use(b)):
                            diags.append(Diagnostic(
                                "FS Det Par",
                                f"{label} on {describe(ua)} and {describe(ub)} "
                                f"are not confined to a single actor"))
                except FlowstateError as exc:
                    diags.append(exc.diag)
            case PArray(var, lo, hi, body):
                if size_leq(tenv, hi, lo) is True:
                    return  # at most one element
                for comp in flow_comps(body):
                    ev = comp.event
                    if ev.index is None:
                        diags.append(Diagnostic(
                            "FS Det Par",
                            f"every element of the actor array uses channel "
                            f"{ev.chan}"))
                    elif not (isinstance(ev.index, SVar)
                              and ev.index.name == var):
                        diags.append(Diagnostic(
                            "FS Det Par",
                            f"actor-array elements share {ev.chan}[..]; the "
                            f"index must be the array variable {var}"))
            case _:
                pass

    try:
        rec(fs)
    except FlowstateError as exc:
        diags.append(exc.diag)
    return diags


# ---------------------------------------------------------------------------
# Progress
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _CanonComp:
    """Comprehension in matching form: event plus renamed iterators."""
    key: tuple

    def __str__(self):
        return self.key.__str__()


def _size_key(e: SizeExpr):
    e = normalize_size(e)
    match e:
        case Num(n):
            return ("n", n)
        case Infinity():
            return ("inf",)
        case SVar(name):
            return ("v", name)
        case _:
            from .kinding import _atom_key_any
            return _atom_key_any(e)


def canonical_comp(comp: Comp) -> _CanonComp:
    """Renames iterator variables positionally and normalizes bounds so two
    comprehensions equal up to alpha-renaming get the same key.  Guards must
    have been folded away."""
    renaming = {it.var: f".{i}" for i, it in enumerate(comp.iterators)}
    iters = tuple(
        (renaming[it.var], _size_key(it.lo), _size_key(it.hi))
        for it in comp.iterators)
    ev = comp.event
    if ev.index is None:
        idx_key = None
    elif isinstance(ev.index, SVar) and ev.index.name in renaming:
        idx_key = ("bound", renaming[ev.index.name])
    else:
        idx_key = ("free", _size_key(ev.index))
    return _CanonComp((ev.chan, ev.is_send, idx_key, iters))


def comp_concrete(comp: Comp) -> Optional[Counter]:
    """Expand a fully numeric comprehension into concrete event counts.
    Keys: (chan, is_send) or (chan, is_send, element)."""
    bounds = []
    total = 1
    for it in comp.iterators:
        lo = normalize_size(it.lo)
        hi = normalize_size(it.hi)
        if not (isinstance(lo, Num) and isinstance(hi, Num)):
            return None
        n = max(0, hi.value - lo.value + 1)
        total *= n
        if total > _EXPAND_LIMIT:
            return None
        bounds.append((it.var, lo.value, hi.value))
    ev = comp.event
    if ev.index is None:
        return Counter({(ev.chan, ev.is_send): total}) if total else Counter()
    if isinstance(ev.index, Num):
        return Counter({(ev.chan, ev.is_send, ev.index.value): total}) \
            if total else Counter()
    if isinstance(ev.index, SVar):
        pos = next((i for i, (v, _, _) in enumerate(bounds)
                    if v == ev.index.name), None)
        if pos is not None:
            var, lo, hi = bounds[pos]
            per = 1
            for i, (_, l, h) in enumerate(bounds):
                if i != pos:
                    per *= max(0, h - l + 1)
            out: Counter = Counter()
            if per:
                for k in range(lo, hi + 1):
                    out[(ev.chan, ev.is_send, k)] = per
            return out
    idx = normalize_size(ev.index)
    if isinstance(idx, Num):
        return Counter({(ev.chan, ev.is_send, idx.value): total}) \
            if total else Counter()
    return None


def _complement_counts(counts: Counter) -> Counter:
    return Counter({(k[0], not k[1]) + k[2:]: v for k, v in counts.items()})


def _complement_canon(comp: Comp) -> _CanonComp:
    return canonical_comp(Comp(comp.event.complement(), comp.iterators,
                               comp.guards))


class Record:
    """Producer events already fired, tagged with the producing actor so a
    comprehension can never discharge its own precondition.  Plain channels
    are tracked as a symbolic multiplicity per (channel, direction); channel
    arrays per element when numeric and as whole comprehensions when
    symbolic."""

    def __init__(self, env: Optional[TypeEnv] = None):
        self.env = env if env is not None else TypeEnv()
        self.plain: dict = {}            # (chan, is_send, producer) -> SizeExpr
        self.numeric: Counter = Counter()  # (chan, is_send, elem, producer) -> int
        self.symbolic: Counter = Counter()  # (canonical comp, producer) -> int

    def key(self):
        return (tuple(sorted((k, print_size(v))
                             for k, v in self.plain.items())),
                tuple(sorted(self.numeric.items())),
                tuple(sorted(self.symbolic.items(), key=lambda kv: str(kv[0]))))

    def copy(self) -> "Record":
        out = Record(self.env)
        out.plain = dict(self.plain)
        out.numeric = Counter(self.numeric)
        out.symbolic = Counter(self.symbolic)
        return out

    def add(self, comp: Comp, producer: int) -> None:
        ev = comp.event
        if ev.index is None:
            _, mult = _comp_target(comp)
            key = (ev.chan, ev.is_send, producer)
            have = self.plain.get(key, Num(0))
            self.plain[key] = normalize_size(Add(have, mult))
            return
        counts = comp_concrete(comp)
        if counts is not None:
            for k, v in counts.items():
                self.numeric[k + (producer,)] += v
        else:
            self.symbolic[(canonical_comp(comp), producer)] += 1

    def try_consume(self, comp: Comp, consumer: int) -> Optional["Record"]:
        ev = comp.event
        if ev.index is None:
            _, need = _comp_target(comp)
            for key in sorted(self.plain, key=str):
                chan, is_send, producer = key
                if chan != ev.chan or is_send == ev.is_send \
                        or producer == consumer:
                    continue
                have = self.plain[key]
                if size_leq(self.env, need, have) is not True:
                    continue
                out = self.copy()
                left = normalize_size(Sub(have, need))
                if left == Num(0):
                    out.plain.pop(key)
                else:
                    out.plain[key] = left
                return out
            return None
        counts = comp_concrete(comp)
        if counts is not None:
            want = _complement_counts(counts)
            producers = sorted({k[-1] for k in self.numeric if k[-1] != consumer})
            for producer in producers:
                tagged = {k + (producer,): v for k, v in want.items()}
                if all(self.numeric.get(k, 0) >= v for k, v in tagged.items()):
                    out = self.copy()
                    out.numeric.subtract(tagged)
                    out.numeric = +out.numeric
                    return out
            return None
        want_canon = _complement_canon(comp)
        for (canon, producer), n in sorted(self.symbolic.items(),
                                           key=lambda kv: str(kv[0])):
            if canon == want_canon and producer != consumer and n > 0:
                out = self.copy()
                out.symbolic[(canon, producer)] -= 1
                out.symbolic = +out.symbolic
                return out
        return None


@dataclass
class ScheduleStep:
    actor: str
    action: str  # "produce" | "consume"
    event: str
    multiplicity: str

    def to_json(self) -> dict:
        return {"actor": self.actor, "action": self.action,
                "event": self.event, "multiplicity": self.multiplicity}


def _progress_entries(tenv: TypeEnv, fs: ProcFlow):
    """Per-actor ordered comprehension lists, actor arrays unrolled when
    numeric and kept comprehension-level otherwise."""
    from .flowstate import distribute_iterator
    entries: list[tuple[str, list[Comp]]] = []
    for i, part in enumerate(proc_flow_components(fs)):
        match part:
            case PActor(flow):
                entries.append((f"a{i}", _fold_comps(flow_comps(flow))))
            case PArray(var, lo, hi, body):
                lo_n, hi_n = normalize_size(lo), normalize_size(hi)
                if isinstance(lo_n, Num) and isinstance(hi_n, Num) \
                        and hi_n.value - lo_n.value + 1 <= 4096:
                    for k in range(lo_n.value, hi_n.value + 1):
                        comps = _fold_comps(flow_comps(
                            subst_flow(body, var, Num(k))))
                        entries.append((f"a{i}[{k}]", comps))
                else:
                    distributed = distribute_iterator(
                        body, Iterator(var, lo, hi))
                    entries.append((f"a{i}[{var}]",
                                    _fold_comps(flow_comps(distributed))))
    return entries


def _fold_comps(comps: list[Comp]) -> list[Comp]:
    out = []
    for comp in comps:
        folded = fold_guards_comp(comp)
        # drop comprehensions that provably fire zero times
        if any(normalize_size(extent(it)) == Num(0) for it in folded.iterators):
            continue
        out.append(folded)
    return out


def _record_from_flow(tenv: TypeEnv, initial: Optional[ProcFlow]) -> Record:
    record = Record(tenv)
    if initial is None:
        return record
    for part in proc_flow_components(initial):
        if isinstance(part, PActor):
            for comp in _fold_comps(flow_comps(part.flow)):
                record.add(comp, -1)
    return record


def check_progress(tenv: TypeEnv, fs: ProcFlow,
                   initial: Optional[ProcFlow] = None
                   ) -> Union[list[ScheduleStep], list[Diagnostic]]:
    """Searches for a firing order that discharges every actor flowstate.
    Returns the witnessing schedule, or diagnostics describing the cycle."""
    try:
        entries = _progress_entries(tenv, fs)
    except FlowstateError as exc:
        return [exc.diag]
    record0 = _record_from_flow(tenv, initial)
    n = len(entries)
    failed: set = set()

    def state_key(positions, record: Record):
        return (positions, record.key())

    def dfs(positions: tuple, record: Record) -> Optional[list[ScheduleStep]]:
        if all(positions[i] >= len(entries[i][1]) for i in range(n)):
            return []
        key = state_key(positions, record)
        if key in failed:
            return None
        for i in range(n):
            pos = positions[i]
            name, comps = entries[i]
            if pos >= len(comps):
                continue
            comp = comps[pos]
            try:
                role = classify_event(tenv, comp.event)
            except FlowstateError as exc:
                raise exc
            target, mult = _comp_target(comp)
            step = ScheduleStep(name,
                                "produce" if role == PRODUCER else "consume",
                                print_comp(comp), print_size(mult))
            next_positions = positions[:i] + (pos + 1,) + positions[i + 1:]
            if role == PRODUCER:
                rec2 = record.copy()
                rec2.add(comp, i)
                rest = dfs(next_positions, rec2)
            else:
                rec2 = record.try_consume(comp, i)
                if rec2 is None:
                    continue
                rest = dfs(next_positions, rec2)
            if rest is not None:
                return [step] + rest
        failed.add(key)
        return None

    try:
        schedule = dfs(tuple(0 for _ in range(n)), record0)
    except FlowstateError as exc:
        return [exc.diag]
    except RecursionError:
        return [Diagnostic("FS Prog Par", "progress search exhausted")]
    if schedule is not None:
        return schedule
    return _cycle_diagnostics(tenv, entries, record0)


def _cycle_diagnostics(tenv: TypeEnv, entries, record0: Record) -> list[Diagnostic]:
    """Greedy replay to a stuck frontier, then report the dependency cycle."""
    positions = [0] * len(entries)
    record = record0.copy()
    progressed = True
    while progressed:
        progressed = False
        for i, (name, comps) in enumerate(entries):
            if positions[i] >= len(comps):
                continue
            comp = comps[positions[i]]
            if classify_event(tenv, comp.event) == PRODUCER:
                record.add(comp, i)
                positions[i] += 1
                progressed = True
            else:
                rec2 = record.try_consume(comp, i)
                if rec2 is not None:
                    record = rec2
                    positions[i] += 1
                    progressed = True
    blocked = [(i, entries[i][0], entries[i][1][positions[i]])
               for i in range(len(entries))
               if positions[i] < len(entries[i][1])]
    if not blocked:
        return [Diagnostic("FS Prog Cons", "no firing order discharges the network")]

    # wait-for edges: a blocked actor waits on whoever still holds the
    # complementary event of its head comprehension
    owners: dict[str, list[int]] = {}
    for i, (name, comps) in enumerate(entries):
        for comp in comps[positions[i]:]:
            owners.setdefault(
                (comp.event.chan, comp.event.is_send), []).append(i)
    waits: dict[int, tuple[int, str]] = {}
    for i, name, comp in blocked:
        want = (comp.event.chan, not comp.event.is_send)
        for j in owners.get(want, []):
            if j != i:
                waits[i] = (j, comp.event.chan)
                break
    cycle = _find_cycle(waits)
    if cycle:
        path = " -> ".join(
            f"{entries[i][0]} (waits on {waits[i][1]})" for i in cycle)
        return [Diagnostic(
            "FS Prog Cons", f"causal cycle among actors: {path}")]
    details = "; ".join(
        f"{name} blocked on {print_comp(comp)}" for _, name, comp in blocked)
    return [Diagnostic(
        "FS Prog Cons", f"communication cannot be satisfied: {details}")]


def _find_cycle(waits: dict[int, tuple[int, str]]) -> Optional[list[int]]:
    for start in waits:
        seen: list[int] = []
        node = start
        while node in waits and node not in seen:
            seen.append(node)
            node = waits[node][0]
        if node in seen:
            return seen[seen.index(node):]
    return None


def schedule_to_json(schedule: list[ScheduleStep]) -> list[dict]:
    return [s.to_json() for s in schedule]
