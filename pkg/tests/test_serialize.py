import numpy as np
import pytest

from smoothaa.accel import SolverConfig, run_solver
from smoothaa.problems import (
    bearing_fixed_point_map,
    build_bearing,
    build_enr,
    build_nnls_synthetic,
    enr_fixed_point_map,
    initial_point,
)
from smoothaa.serialize import InstanceFormatError, dumps_instance, load_instance, loads_instance, save_instance


def test_enr_round_trip_bit_exact(tmp_path):
    inst = build_enr(15, 25, seed=3)
    path = tmp_path / "enr.txt"
    save_instance(inst, path)
    back = load_instance(path)
    np.testing.assert_array_equal(back.A, inst.A)
    np.testing.assert_array_equal(back.b, inst.b)
    assert (back.lam, back.alpha_step, back.L, back.beta) == (inst.lam, inst.alpha_step, inst.L, inst.beta)
    u0 = initial_point("enr", 25, 3)
    cfg = SolverConfig("smoothing_anderson", 2, tol=1e-8, k_max=300)
    a = run_solver(enr_fixed_point_map(inst), u0, cfg)
    b = run_solver(enr_fixed_point_map(back), u0, cfg)
    assert a.residual_history == b.residual_history


def test_nnls_round_trip():
    inst = build_nnls_synthetic(12, 6, 30.0, seed=1)
    back = loads_instance(dumps_instance(inst))
    np.testing.assert_array_equal(back.A, inst.A)
    assert back.L == inst.L and back.alpha_step == inst.alpha_step


def test_bearing_round_trip():
    inst = build_bearing(17, 0.3)
    text = dumps_instance(inst)
    assert text.startswith("smoothaa-instance v1 family=bearing")
    back = loads_instance(text)
    np.testing.assert_array_equal(back.b, inst.b)
    u = np.linspace(-1, 1, 17)
    np.testing.assert_array_equal(bearing_fixed_point_map(back).G(u), bearing_fixed_point_map(inst).G(u))


def test_bearing_tampered_arrays_rejected():
    text = dumps_instance(build_bearing(5, 0.3)).splitlines()
    i = text.index("array b 1 5")
    text[i + 1] = " ".join(["0"] * 5)
    with pytest.raises(InstanceFormatError):
        loads_instance("\n".join(text))


@pytest.mark.parametrize("text", [
    "",
    "not-a-header\n",
    "smoothaa-instance v1 family=enr M=2\narray A 2 2\n1 2\n",
    "smoothaa-instance v1 family=zzz\n",
    "smoothaa-instance v1 family=enr M=1 n=1\narray A 1 1\n1\n",
    "smoothaa-instance v1 broken\n",
])
def test_malformed(text):
    with pytest.raises(InstanceFormatError):
        loads_instance(text)


def test_unsupported_object():
    with pytest.raises(TypeError):
        dumps_instance(object())
