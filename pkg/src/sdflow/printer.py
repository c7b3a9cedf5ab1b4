"""Canonical concrete syntax.  The printer is the formatter of record:
whatever it emits, the parser maps back to a structurally identical tree.
"""

from __future__ import annotations

from .syntax import (
    ActorComp, ActorE, Add, App, Assign, AtMost, BinOp, BoolLit, BoolType,
    ChanArrayType, ChannelArrayKind, ChannelKind, ChanType, Comp, Deref, Div,
    Divides, Event, Expr, FEmpty, For, FromIndex, FromSize, FSeq, Guard, If,
    IndexType, Infinity, IntLit, IntType, Lam, Let, LocRef, MkIndex, MkSize,
    Mul, Network, NewRef, Num, NumGuard, PActor, Par, PArray, PEmpty, PPar,
    Proc, ProcFlow, ProcType, Recv, RefType, Send, SeqE, SizeExpr, SizeKind,
    SizeType, SMin, Stop, Sub, SVar, Var, When, ActorFlow, seq_flow,
)

# precedence levels for size expressions
_SZ_ADD, _SZ_MUL, _SZ_ATOM = 1, 2, 3


def print_size(e: SizeExpr, prec: int = 0) -> str:
    match e:
        case Num(n):
            return str(n)
        case Infinity():
            return "inf"
        case SVar(name):
            return name
        case Add(a, b):
            s = f"{print_size(a, _SZ_ADD)} + {print_size(b, _SZ_MUL)}"
            return f"({s})" if prec > _SZ_ADD else s
        case Sub(a, b):
            s = f"{print_size(a, _SZ_ADD)} - {print_size(b, _SZ_MUL)}"
            return f"({s})" if prec > _SZ_ADD else s
        case Mul(a, b):
            s = f"{print_size(a, _SZ_MUL)} * {print_size(b, _SZ_ATOM)}"
            return f"({s})" if prec > _SZ_MUL else s
        case Div(a, b):
            s = f"{print_size(a, _SZ_MUL)} / {print_size(b, _SZ_ATOM)}"
            return f"({s})" if prec > _SZ_MUL else s
        case SMin(a, b):
            return f"min({print_size(a)}, {print_size(b)})"
    raise TypeError(f"not a size expression: {e!r}")


def print_type(t) -> str:
    match t:
        case BoolType():
            return "Boolean"
        case IntType():
            return "Integer"
        case SizeType(w):
            return f"Size({print_size(w)})"
        case IndexType(w):
            return f"Index({print_size(w)})"
        case RefType(p):
            return f"Ref({print_type(p)})"
        case ProcType(params, latent, rest, result):
            ps = ", ".join(print_type(p) for p in params)
            return (f"({ps}) -> [{print_flow(latent)} => {print_flow(rest)}] "
                    f"{print_type(result)}")
        case ChanType(pol, name, payload):
            return f"Chan({pol}, {name}, {print_type(payload)})"
        case ChanArrayType(pol, name, payload, bound):
            return (f"ChanArray({pol}, {name}, {print_type(payload)}, "
                    f"{print_size(bound)})")
    raise TypeError(f"not a type: {t!r}")


def print_event(ev: Event) -> str:
    idx = f"[{print_size(ev.index)}]" if ev.index is not None else ""
    return f"{ev.chan}{idx}{'!' if ev.is_send else '?'}"


def print_guard(g: Guard) -> str:
    match g:
        case Divides(divisor, var):
            return f"{print_size(divisor)} | {var}"
        case AtMost(var, bound):
            return f"{var} <= {print_size(bound)}"
        case NumGuard(op, left, right):
            return f"{print_size(left)} {op} {print_size(right)}"
    raise TypeError(f"not a guard: {g!r}")


def print_comp(c: Comp) -> str:
    items = [f"{it.var} in {print_size(it.lo)}..{print_size(it.hi)}"
             for it in c.iterators]
    items += [print_guard(g) for g in c.guards]
    if not items:
        return print_event(c.event)
    return f"{print_event(c.event)}<{', '.join(items)}>"


def print_flow(fs: ActorFlow, normalized: bool = False) -> str:
    if normalized:
        from .syntax import flow_comps
        fs = seq_flow(*flow_comps(fs))
    match fs:
        case FEmpty():
            return "eps"
        case Comp():
            return print_comp(fs)
        case FSeq(a, b):
            return f"{print_flow(a)} ; {print_flow(b)}"
    raise TypeError(f"not an actor flowstate: {fs!r}")


def print_proc_flow(fs: ProcFlow) -> str:
    match fs:
        case PEmpty():
            return "eps"
        case PActor(flow):
            return print_flow(flow)
        case PArray(var, lo, hi, body):
            return (f"[ {print_flow(body)} | {var} in "
                    f"{print_size(lo)}..{print_size(hi)} ]")
        case PPar(a, b):
            return f"{print_proc_flow(a)} || {print_proc_flow(b)}"
    raise TypeError(f"not a process flowstate: {fs!r}")


# --- expressions -------------------------------------------------------------
# precedence: 0 expr (when/for/if/fn/assign), 1 compare, 2 additive,
# 3 multiplicative, 4 unary (!, ref, send, recv), 5 atoms

def print_expr(e: Expr, prec: int = 0, indent: int = 0) -> str:
    match e:
        case IntLit(v):
            return str(v)
        case BoolLit(v):
            return "true" if v else "false"
        case Var(name):
            return name
        case LocRef(actor, slot):
            return f"<loc {actor}.{slot}>"
        case MkSize(a):
            return f"size({print_expr(a)})"
        case MkIndex(a):
            return f"index({print_expr(a)})"
        case FromSize(a):
            return f"fromSize({print_expr(a)})"
        case FromIndex(a):
            return f"fromIndex({print_expr(a)})"
        case Recv(chan, index):
            idx = f"[{print_expr(index)}]" if index is not None else ""
            s = f"recv {chan}{idx}"
            return f"({s})" if prec > 4 else s
        case Send(chan, index, payload):
            idx = f"[{print_expr(index)}]" if index is not None else ""
            s = f"send {chan}{idx} {print_expr(payload, 5, indent)}"
            return f"({s})" if prec > 4 else s
        case NewRef(a):
            s = f"ref {print_expr(a, 5, indent)}"
            return f"({s})" if prec > 4 else s
        case Deref(a):
            s = f"!{print_expr(a, 5, indent)}"
            return f"({s})" if prec > 4 else s
        case BinOp(op, l, r):
            if op in ("==", "<=", "<"):
                s = f"{print_expr(l, 2, indent)} {op} {print_expr(r, 2, indent)}"
                return f"({s})" if prec > 1 else s
            if op in ("+", "-"):
                s = f"{print_expr(l, 2, indent)} {op} {print_expr(r, 3, indent)}"
                return f"({s})" if prec > 2 else s
            s = f"{print_expr(l, 3, indent)} {op} {print_expr(r, 4, indent)}"
            return f"({s})" if prec > 3 else s
        case App(fn, args):
            inner = ", ".join(print_expr(a, 0, indent) for a in args)
            return f"{print_expr(fn, 5, indent)}({inner})"
        case Assign(t, v):
            s = f"{print_expr(t, 1, indent)} := {print_expr(v, 0, indent)}"
            return f"({s})" if prec > 0 else s
        case If(c, t, f):
            s = (f"if {print_expr(c, 1, indent)} then {print_expr(t, 1, indent)} "
                 f"else {print_expr(f, 1, indent)}")
            return f"({s})" if prec > 0 else s
        case When(l, op, r, body):
            s = (f"when ({_guard_operand(l)} {op} {_guard_operand(r)}) "
                 f"{print_expr(body, 1, indent)}")
            return f"({s})" if prec > 0 else s
        case For(tvar, var, lo, bound, body):
            s = (f"for ({tvar}, {var} in {lo}..{print_expr(bound, 1, indent)}) "
                 f"{print_block(body, indent)}")
            return f"({s})" if prec > 0 else s
        case Lam(params, latent, rest, body):
            ps = ", ".join(f"{n} : {print_type(t)}" for n, t in params)
            s = (f"fn ({ps}) [{print_flow(latent)} => {print_flow(rest)}] "
                 f"{print_expr(body, 1, indent)}")
            return f"({s})" if prec > 0 else s
        case Let() | SeqE():
            return print_block(e, indent)
    raise TypeError(f"not an expression: {e!r}")


def _guard_operand(e: Expr) -> str:
    # size literals in guard position print bare; the parser re-wraps them
    match e:
        case MkSize(IntLit(n)):
            return str(n)
        case _:
            return print_expr(e, 2)


def _stmts(e: Expr) -> list:
    match e:
        case Let(var, bound, body):
            return [("let", var, bound)] + _stmts(body)
        case SeqE(a, b):
            return [("expr", a)] + _stmts(b)
        case _:
            return [("expr", e)]


def print_block(e: Expr, indent: int = 0) -> str:
    pieces = _stmts(e)
    if len(pieces) == 1 and pieces[0][0] == "expr" and not isinstance(e, (Let, SeqE)):
        inner = e
        if not isinstance(inner, (Let, SeqE)):
            return f"{{ {print_expr(inner, 0, indent)} }}"
    pad = "  " * (indent + 1)
    lines = []
    for i, p in enumerate(pieces):
        tail = ";" if i < len(pieces) - 1 else ""
        if p[0] == "let":
            lines.append(f"{pad}let {p[1]} = {print_expr(p[2], 0, indent + 1)}{tail}")
        else:
            lines.append(f"{pad}{print_expr(p[1], 0, indent + 1)}{tail}")
    close = "  " * indent
    return "{\n" + "\n".join(lines) + f"\n{close}}}"


def print_proc(p: Proc, indent: int = 0) -> str:
    pad = "  " * indent
    match p:
        case Stop():
            return f"{pad}stop"
        case ActorE(expr):
            return f"{pad}actor {print_block(expr, indent)}"
        case ActorComp(tvar, var, lo, hi, body):
            return (f"{pad}actors ({tvar}, {var} in {lo}.."
                    f"{print_expr(hi)}) {print_block(body, indent)}")
        case Par(a, b):
            return f"{print_proc(a, indent)}\n{pad}||\n{print_proc(b, indent)}"
    raise TypeError(f"not a process: {p!r}")


def print_program(net: Network) -> str:
    out = []
    for name, kind in net.tenv.items:
        match kind:
            case SizeKind(bound):
                out.append(f"size {name} : Size({print_size(bound)});")
            case ChannelKind(delay, limit):
                out.append(f"chan {name} : Channel({delay}, {print_size(limit)});")
            case ChannelArrayKind(delay, limit, bound):
                out.append(f"chanarray {name} : ChannelArray({delay}, "
                           f"{print_size(limit)}, {print_size(bound)});")
            case _:
                raise TypeError(f"unexpected kind binding {name}: {kind!r}")
    for name, ty in net.venv.items:
        out.append(f"val {name} : {print_type(ty)};")
    out.append(f"flow {print_proc_flow(net.flow)};")
    out.append("")
    out.append("network {")
    out.append(print_proc(net.body, 1))
    out.append("}")
    return "\n".join(out) + "\n"
