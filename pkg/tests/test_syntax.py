import random

from conftest import ProgramGen, comp, ev, it, seq

from sdflow.parser import parse_program, parse_program_or_raise
from sdflow.printer import print_flow, print_proc, print_program
from sdflow.syntax import (
    Comp, Divides, Event, FEmpty, FSeq, Iterator, Num, Stop, SVar,
    flow_free_vars, subst_comp, subst_flow,
)


def test_subst_replaces_array_index():
    c = comp(ev("c!", "t"))
    out = subst_flow(c, "t", Num(3))
    assert out == comp(ev("c!", 3))


def test_subst_into_iterator_bounds():
    c = comp(ev("a!"), it("t0", 1, "t"))
    out = subst_flow(c, "t", Num(4))
    assert out == comp(ev("a!"), it("t0", 1, 4))


def test_subst_respects_shadowing():
    # t is bound by the comprehension itself: occurrences under the binder stay
    c = comp(ev("c!", "t"), it("t", 1, 8))
    before = flow_free_vars(c)
    out = subst_comp(c, "t", Num(3))
    assert out == c
    assert flow_free_vars(out) == before


def test_subst_removes_free_variable():
    c = comp(ev("c!"), it("u", 1, "t"))
    assert "t" in flow_free_vars(c)
    out = subst_flow(c, "t", Num(2))
    assert "t" not in flow_free_vars(out)


def test_subst_avoids_capture():
    # replacing u by t must not let the comprehension binder t capture it
    c = comp(ev("c!", "t"), it("t", 1, SVar("u")))
    out = subst_comp(c, "u", SVar("t"))
    assert isinstance(out, Comp)
    binder = out.iterators[0].var
    assert binder != "t"
    assert out.iterators[0].hi == SVar("t")
    assert out.event.index == SVar(binder)


def test_print_stop():
    assert print_proc(Stop()).strip() == "stop"


def test_print_flow_normalized_drops_empty():
    c = comp(ev("c!"), it("t", 1, 4))
    assert print_flow(FSeq(FEmpty(), c), normalized=True) == print_flow(c)


def test_downsampler_prints_intro_guard():
    from conftest import load
    net = parse_program_or_raise(load("good", "downsampler.sdf"))
    assert "when (2 | x)" in print_program(net)


def test_downsampler_parses_to_loop_with_guarded_send():
    from conftest import load
    from sdflow.syntax import ActorE, For, Let, Recv, Send, When, proc_components
    net = parse_program_or_raise(load("good", "downsampler.sdf"))
    actor = proc_components(net.body)[1]
    assert isinstance(actor, ActorE) and isinstance(actor.expr, For)
    body = actor.expr.body
    assert isinstance(body, Let) and isinstance(body.bound, Recv)
    assert isinstance(body.body, When) and isinstance(body.body.body, Send)


def test_parse_is_total_on_garbage():
    out = parse_program("network { actor { send } }")
    assert isinstance(out, list) and out[0].rule == "Parse"
    assert out[0].loc is not None


def test_parse_reports_duplicate_declaration():
    out = parse_program("size n : Size(inf);\nsize n : Size(inf);\n"
                        "flow eps;\nnetwork { stop }")
    assert isinstance(out, list)
    assert "duplicate" in out[0].message


def test_roundtrip_generated_networks():
    rng = random.Random(99)
    for i in range(50):
        net = ProgramGen(random.Random(rng.randrange(1 << 30))).network()
        text = print_program(net)
        reparsed = parse_program(text)
        assert not isinstance(reparsed, list), (text, reparsed)
        assert reparsed == net, text


def test_roundtrip_corpus():
    from conftest import corpus_files
    for f in corpus_files("good"):
        net = parse_program_or_raise(f.read_text())
        assert parse_program_or_raise(print_program(net)) == net, f.name
