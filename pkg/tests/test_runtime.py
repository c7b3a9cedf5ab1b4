import pytest

from conftest import load, sizes_for

from sdflow.flowstate import proc_rate_summary
from sdflow.kinding import eval_size
from sdflow.parser import parse_program_or_raise
from sdflow.runtime import (
    Blocked, Configuration, Fault, InstantiationError, Stepped, explore,
    instantiate, run, step_expr,
)
from sdflow.syntax import (
    ActorE, FromSize, IntLit, MkSize, Send, Var, proc_components,
)
from sdflow.typecheck import check_proc


def _net(name, kind="good"):
    return parse_program_or_raise(load(kind, name))


# --- instantiation -----------------------------------------------------------

def test_instantiate_downsampler_buffers():
    net = _net("downsampler.sdf")
    cfg = instantiate(net, {"s": 8})
    assert cfg.heap.chans == {"i": (), "o": ()}
    assert cfg.heap.caps == {"i": 4, "o": 4}
    assert len(cfg.actors) == 3


def test_instantiate_prefills_delay_channel():
    net = _net("delayed_pipeline.sdf")
    cfg = instantiate(net, {})
    assert cfg.heap.chans["c"] == (IntLit(0), IntLit(0))


def test_instantiate_unrolls_actor_comprehension():
    net = _net("fanin_array.sdf")
    cfg = instantiate(net, {"s": 3})
    names = [a.name for a in cfg.actors]
    assert names == ["a0[1]", "a0[2]", "a0[3]", "a1"]
    assert set(cfg.heap.arrays["a"].keys()) == {1, 2, 3}


def test_instantiate_requires_all_sizes():
    net = _net("downsampler.sdf")
    with pytest.raises(InstantiationError):
        instantiate(net, {})


def test_instantiate_rejects_nonpositive_sizes():
    net = _net("downsampler.sdf")
    with pytest.raises(InstantiationError):
        instantiate(net, {"s": 0})


# --- single steps ------------------------------------------------------------

def _solo_config(name="pipeline2.sdf", v=4):
    net = _net(name)
    return net, instantiate(net, sizes_for(net, v))


def test_send_appends_and_labels():
    net, cfg = _solo_config()
    out = step_expr(Send("cw", None, IntLit(7)), cfg.heap, "a0", cfg.venv)
    assert isinstance(out, Stepped)
    assert out.expr == IntLit(0)
    assert out.label is not None and out.label.chan == "c" and out.label.is_send
    out.effect(cfg.heap)
    assert cfg.heap.chans["c"] == (IntLit(7),)


def test_recv_pops_fifo_head():
    from sdflow.syntax import Recv
    net, cfg = _solo_config()
    cfg.heap.chans["c"] = (IntLit(7), IntLit(9))
    out = step_expr(Recv("cr"), cfg.heap, "a1", cfg.venv)
    assert isinstance(out, Stepped)
    assert out.expr == IntLit(7)
    assert not out.label.is_send
    out.effect(cfg.heap)
    assert cfg.heap.chans["c"] == (IntLit(9),)


def test_send_blocks_on_full_buffer():
    net, cfg = _solo_config()
    cfg.heap.chans["c"] = (IntLit(1), IntLit(2))  # capacity 2
    out = step_expr(Send("cw", None, IntLit(3)), cfg.heap, "a0", cfg.venv)
    assert isinstance(out, Blocked)


def test_from_size_projects():
    net, cfg = _solo_config()
    out = step_expr(FromSize(MkSize(IntLit(8))), cfg.heap, "a0", cfg.venv)
    assert isinstance(out, Stepped) and out.expr == IntLit(8)


def test_buffer_push_asserts_capacity():
    net, cfg = _solo_config()
    cfg.heap.chans["c"] = (IntLit(1), IntLit(2))
    with pytest.raises(AssertionError):
        cfg.heap.push("c", IntLit(3))


# --- whole runs ------------------------------------------------------------------

def test_downsampler_trace_counts():
    net = _net("downsampler.sdf")
    result = run(instantiate(net, {"s": 8}))
    assert result.status == "done"
    assert result.comm_counts[("i", "recv")] == 8
    assert result.comm_counts[("o", "send")] == 4


def test_trace_counts_match_rate_summary():
    from sdflow.flowstate import RangeIndex
    for name in ("downsampler.sdf", "upsampler.sdf", "nested_loops.sdf",
                 "guard_and_bound.sdf", "worker_array_pipeline.sdf"):
        net = _net(name)
        sizes = sizes_for(net, 4)
        flow, _ = check_proc(net.tenv, net.venv, net.body)
        summary = proc_rate_summary(net.tenv, flow)
        # aggregate per (channel, direction); array ranges expand elementwise
        want: dict = {}
        for key, mult in summary.items():
            n = eval_size(mult, sizes)
            if len(key) == 3 and isinstance(key[2], RangeIndex):
                lo = eval_size(key[2].lo, sizes)
                hi = eval_size(key[2].hi, sizes)
                n *= max(0, hi - lo + 1)
            k2 = (key[0], key[1])
            want[k2] = want.get(k2, 0) + n
        result = run(instantiate(net, sizes))
        assert result.status == "done", name
        assert dict(result.comm_counts) == want, name


def test_undelayed_cycle_deadlocks_everywhere():
    net = _net("undelayed_cycle.sdf", kind="rejected")
    result = run(instantiate(net, {"n": 4}))
    assert result.status == "deadlock"
    ex = explore(instantiate(net, {"n": 4}))
    assert not ex.any_complete


def test_delayed_cycle_completes():
    net = _net("delayed_cycle.sdf")
    ex = explore(instantiate(net, {"n": 4}))
    assert ex.any_complete and ex.all_complete


def test_deterministic_outcome_across_interleavings():
    net = _net("accumulator.sdf")
    ex = explore(instantiate(net, {"n": 4}))
    assert ex.all_complete
    assert len(ex.terminals) == 1  # same final cells and counts on every path


def test_round_robin_trace_reproducible():
    net = _net("downsampler.sdf")
    r1 = run(instantiate(net, {"s": 4}))
    r2 = run(instantiate(net, {"s": 4}))
    assert [t.to_json() for t in r1.trace] == [t.to_json() for t in r2.trace]


def test_random_seeded_trace_reproducible():
    net = _net("downsampler.sdf")
    r1 = run(instantiate(net, {"s": 4}), scheduler="random", seed=11)
    r2 = run(instantiate(net, {"s": 4}), scheduler="random", seed=11)
    assert [t.to_json() for t in r1.trace] == [t.to_json() for t in r2.trace]


def test_fault_drops_heap_effect_only():
    net = _net("pipeline2.sdf")
    result = run(instantiate(net, {"n": 2}), fault=Fault(drop_send=1))
    # the dropped send leaves the consumer starving
    assert result.status == "deadlock"


def test_accumulator_sums_stream():
    net = _net("accumulator.sdf")
    result = run(instantiate(net, {"n": 4}))
    assert result.status == "done"
    final = [a.expr for a in result.config.actors]
    assert final[2] == IntLit(1 + 2 + 3 + 4)
