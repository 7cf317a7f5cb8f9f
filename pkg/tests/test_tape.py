import json
import math

import numpy as np
import pytest

from absgrad import _kernels_py
from absgrad.problems import phimu_document, phimu_tape, random_tape
from absgrad.tape import (EvalDomainError, Node, Tape, TapeError, forward_eval,
                          parse_tape, structural_check)

try:
    from absgrad import _kernels_c
except ImportError:
    _kernels_c = None


ABS_X_DOC = {
    "n_inputs": 1,
    "nodes": [{"op": "input", "value": 0}, {"op": "abs", "args": [0]}],
    "output": 1,
}


class TestParse:
    def test_smallest_abs_smooth_function(self):
        tape = parse_tape(json.dumps(ABS_X_DOC))
        assert tape.n_inputs == 1
        assert tape.n_switch == 1
        assert len(tape.nodes) == 2

    def test_phimu_document(self):
        tape = parse_tape(json.dumps(phimu_document(1.0)))
        assert tape.n_inputs == 2
        assert tape.n_switch == 3

    def test_forward_reference_rejected(self):
        doc = {"n_inputs": 1,
               "nodes": [{"op": "input", "value": 0},
                         {"op": "add", "args": [0, 2]},
                         {"op": "neg", "args": [1]}],
               "output": 2}
        with pytest.raises(TapeError, match="node 1"):
            parse_tape(json.dumps(doc))

    def test_unknown_op(self):
        doc = {"n_inputs": 1,
               "nodes": [{"op": "input", "value": 0},
                         {"op": "tanh", "args": [0]}],
               "output": 1}
        with pytest.raises(TapeError, match="node 1.*unknown op"):
            parse_tape(json.dumps(doc))

    def test_arity_mismatch(self):
        doc = {"n_inputs": 1,
               "nodes": [{"op": "input", "value": 0},
                         {"op": "abs", "args": [0, 0]}],
               "output": 1}
        with pytest.raises(TapeError, match="node 1"):
            parse_tape(json.dumps(doc))

    def test_malformed_json(self):
        with pytest.raises(TapeError, match="malformed JSON"):
            parse_tape("{not json")

    def test_input_slot_out_of_range(self):
        doc = {"n_inputs": 1,
               "nodes": [{"op": "input", "value": 3}],
               "output": 0}
        with pytest.raises(TapeError, match="input slot"):
            parse_tape(json.dumps(doc))

    def test_output_out_of_range(self):
        with pytest.raises(TapeError, match="output"):
            Tape(1, [Node("input", value=0)], 4)

    def test_document_roundtrip(self):
        tape = phimu_tape(-1.0)
        again = Tape.from_document(tape.to_document())
        assert again.to_document() == tape.to_document()


class TestForwardEval:
    def test_phimu_switching_values(self, kernel_backend):
        tape = phimu_tape(1.0)
        trace = forward_eval(tape, [0.5, 0.25])
        expected = np.array([0.5, -0.25, 1 - math.cos(0.5) - math.sin(0.25)])
        assert np.array_equal(trace.z, expected)
        assert trace.phi == pytest.approx(0.5 + 0.25 + abs(expected[2]))

    def test_abs_at_negative_point(self, abs_x_tape):
        trace = forward_eval(abs_x_tape, [-3.0])
        assert trace.z.tolist() == [-3.0]
        assert trace.phi == 3.0

    def test_consistent_definite_slopes_match_plain_value(self, abs_x_tape):
        plain = forward_eval(abs_x_tape, [-3.0])
        frozen = forward_eval(abs_x_tape, [-3.0], xi=[-1.0])
        assert frozen.phi == plain.phi == 3.0

    def test_trace_shapes(self):
        tape = phimu_tape(0.0)
        trace = forward_eval(tape, [0.1, 0.2])
        assert len(trace.values) == len(tape)
        assert np.array_equal(trace.abs_values, np.abs(trace.z))

    def test_frozen_slopes_scale_abs_outputs(self):
        tape = phimu_tape(1.0)
        trace = forward_eval(tape, [0.5, 0.25], xi=[0.5, 0.0, -1.0])
        assert np.array_equal(trace.abs_values,
                              np.array([0.5, 0.0, -1.0]) * trace.z)

    def test_xi_out_of_range_rejected(self, abs_x_tape):
        with pytest.raises(ValueError, match=r"\[-1, 1\]"):
            forward_eval(abs_x_tape, [1.0], xi=[1.5])

    def test_nonfinite_x_rejected(self, abs_x_tape):
        with pytest.raises(ValueError, match="finite"):
            forward_eval(abs_x_tape, [np.inf])

    def test_division_by_zero_reports_node(self, kernel_backend):
        tape = Tape(1, [Node("input", value=0), Node("const", value=0.0),
                        Node("div", args=(0, 1))], 2)
        with pytest.raises(EvalDomainError, match="node 2") as info:
            forward_eval(tape, [1.0])
        assert info.value.node == 2

    def test_log_of_nonpositive_reports_node(self, kernel_backend):
        tape = Tape(1, [Node("input", value=0), Node("log", args=(0,))], 1)
        with pytest.raises(EvalDomainError, match="node 1"):
            forward_eval(tape, [-2.0])

    def test_repeat_evaluations_bitwise_identical(self, kernel_backend):
        rng = np.random.default_rng(3)
        for _ in range(20):
            tape, x = random_tape(rng, n_inputs=3, n_switch=4, n_active=1)
            first = forward_eval(tape, x)
            second = forward_eval(tape, x)
            assert np.array_equal(first.values, second.values)
            assert np.array_equal(first.z, second.z)

    def test_definite_sign_slopes_reproduce_z_exactly(self, kernel_backend):
        # freezing the slopes at sign(z) solves the same switching system
        rng = np.random.default_rng(4)
        for _ in range(30):
            tape, _ = random_tape(rng, n_inputs=3, n_switch=4, n_active=0)
            x = rng.uniform(-1.0, 1.0, 3)
            plain = forward_eval(tape, x)
            frozen = forward_eval(tape, x, xi=np.sign(plain.z))
            assert np.array_equal(frozen.z, plain.z)
            assert frozen.phi == plain.phi


@pytest.mark.skipif(_kernels_c is None, reason="compiled kernels not built")
class TestBackendParity:
    def test_sweeps_bitwise_identical(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            tape, anchor = random_tape(rng, n_inputs=4, n_switch=5,
                                       n_active=int(rng.integers(0, 3)))
            x = anchor + rng.uniform(-0.05, 0.05, 4)
            args = (tape._ops, tape._arg0, tape._arg1, tape._cval, tape._iaux,
                    x, np.empty(0), False, tape.n_switch)
            vc, zc, ec = _kernels_c.forward_sweep(*args)
            vp, zp, ep = _kernels_py.forward_sweep(*args)
            assert ec == ep == -1
            assert np.array_equal(vc, vp) and np.array_equal(zc, zp)
            for seed in [tape.output] + tape._abs_arg.tolist():
                rc = _kernels_c.reverse_sweep(
                    tape._ops, tape._arg0, tape._arg1, tape._iaux,
                    tape._owner, tape._owner_pos, vc, int(seed),
                    tape.n_inputs, tape.n_switch)
                rp = _kernels_py.reverse_sweep(
                    tape._ops, tape._arg0, tape._arg1, tape._iaux,
                    tape._owner, tape._owner_pos, vp, int(seed),
                    tape.n_inputs, tape.n_switch)
                for a, b in zip(rc, rp):
                    assert np.array_equal(a, b)


class TestStructuralCheck:
    def test_phimu_switching_rows_read_no_switch(self):
        report = structural_check(phimu_tape(1.0))
        assert report.n_switch == 3
        assert report.deps == [(), (), ()]
        assert report.depth == 1

    def test_nested_abs_depends_on_inner(self):
        # |x1 + |x1||
        tape = Tape(1, [Node("input", value=0), Node("abs", args=(0,)),
                        Node("add", args=(0, 1)), Node("abs", args=(2,))], 3)
        report = structural_check(tape)
        assert report.deps == [(), (0,)]
        assert report.depth == 2

    def test_single_abs_has_empty_dependencies(self, abs_x_tape):
        report = structural_check(abs_x_tape)
        assert report.deps == [()]

    def test_reuse_after_abs_is_a_switch_dependency(self):
        # u = sqr(x); |u|; later row reads u after the abs -> depends on z1
        tape = Tape(1, [Node("input", value=0), Node("sqr", args=(0,)),
                        Node("abs", args=(1,)), Node("neg", args=(1,)),
                        Node("abs", args=(3,)), Node("add", args=(2, 4))], 5)
        report = structural_check(tape)
        assert report.deps == [(), (0,)]

    def test_report_renders(self):
        text = str(structural_check(phimu_tape(1.0)))
        assert "switching variables: 3" in text
