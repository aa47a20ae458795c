import math

import numpy as np
import pytest

from prosumer_milp.builder import build
from prosumer_milp.milp import BINARY, EQ, GE, LE, MINIMIZE, MilpModel
from prosumer_milp.mps import MpsError, MpsUnsupportedError, export_mps, import_mps, sanitize_name
from prosumer_milp.scenarios import generate_knapsack_case

from conftest import mutation_case


def one_var():
    m = MilpModel(name="tiny")
    x = m.add_variable("x", obj=1.0)
    m.add_constraint("cap", [(x, 1.0)], LE, 3.0)
    return m


def test_minimal_document_sections():
    text = export_mps(one_var())
    for section in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"):
        assert f"\n{section}\n" in text or text.startswith(section)
    assert "OBJSENSE\n    MAX" in text


def test_round_trip_small():
    m = one_var()
    assert import_mps(export_mps(m)).structurally_equal(m)


def test_round_trip_knapsack_model():
    m, _ = build(generate_knapsack_case(3, 12).instance)
    back = import_mps(export_mps(m))
    assert back.structurally_equal(m)
    assert back.integer_indices().tolist() == m.integer_indices().tolist()


def test_round_trip_bounds_and_senses():
    m = MilpModel(sense=MINIMIZE)
    a = m.add_variable("free", -math.inf, math.inf, obj=-1.5)
    b = m.add_variable("neg", -math.inf, 4.0)
    c = m.add_variable("fixed", 2.5, 2.5)
    d = m.add_variable("bin", 0, 1, BINARY, obj=0.1)
    e = m.add_variable("bin_fixed", 1, 1, BINARY)
    g = m.add_variable("lo_only", -3.0)
    m.add_constraint("r1", [(a, 1 / 3), (b, 1e-17)], GE, -7.25)
    m.add_constraint("r2", [(c, 1.0), (d, 2.0), (e, 1.0), (g, 1.0)], EQ, 0.1 + 0.2)
    m.add_constraint("r3", [(a, 1.0)], LE, 0.0)
    back = import_mps(export_mps(m))
    assert back.structurally_equal(m)
    assert export_mps(back) == export_mps(m)


def test_awkward_names_are_sanitised_uniquely():
    m = MilpModel()
    m.add_variable("a b", obj=1.0)
    m.add_variable("a_b", obj=1.0)
    m.add_variable("x" * 300)
    back = import_mps(export_mps(m))
    names = [v.name for v in back.variables]
    assert len(set(names)) == 3
    assert back.structurally_equal(m, names=False)
    assert " " not in sanitize_name("a b")


def test_unsupported_and_malformed():
    with pytest.raises(MpsUnsupportedError):
        import_mps("NAME x\nROWS\n N OBJ\n L r\nCOLUMNS\n    x r 1\nRANGES\n    RNG r 2\nENDATA\n")
    with pytest.raises(MpsError):
        import_mps("")
    with pytest.raises(MpsError):
        import_mps("NAME x\nROWS\n N OBJ\nCOLUMNS\n    x OBJ notanumber\nENDATA\n")
    with pytest.raises(MpsError):
        import_mps("NAME x\nROWS\n N OBJ\nCOLUMNS\n    x missing_row 1\nENDATA\n")


def test_joint_model_round_trip_small():
    inst, _ = mutation_case()
    m, _ = build(inst)
    back = import_mps(export_mps(m))
    assert back.structurally_equal(m)
    # objective and rows evaluate identically
    x = np.linspace(0, 1, m.num_vars)
    assert back.to_arrays()[0] @ x == m.to_arrays()[0] @ x
