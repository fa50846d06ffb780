"""Quick end-to-end check of the Python bindings.

Install the extension first:
    pip install -e crates/py --no-build-isolation
"""

import json
import math

import ballconf_py as bc


def close(a, b, tol):
    assert abs(a - b) <= tol * max(1.0, abs(b)), (a, b)


def main():
    # flat energies
    one4 = bc.Field.constant(4, 1.0)
    close(bc.e2(one4), math.pi**2 / 18, 1e-10)
    close(bc.e2(bc.Field.constant(5, 1.0)), 5 * math.pi**3 / 24, 1e-10)
    close(bc.g2(bc.Field.constant(3, 0.0)), 0.0, 1e-12)

    # all formulas agree on a random field
    u = bc.Field.random(4, seed=3)
    report = bc.e2_report(u)
    assert report["discrepancy"] < 1e-8, report

    # spec round trip
    v = bc.Field.from_json(u.to_json())
    x = [0.1, -0.2, 0.3, 0.0, 0.25]
    close(v(x), u(x), 1e-15)

    # Möbius invariance of the normalized energy
    phi = bc.MobiusMap.random(5, seed=11, radius=0.3)
    flat = bc.Field.constant(4, 1.0).pullback(phi)
    close(bc.e2(bc.normalize(flat)), math.pi**2 / 18, 1e-8)

    # balancing a bubble
    bubble = bc.Field.bubble(4, 1.0, 0.5, [0.6, 0.0, 0.0, 0.8, 0.0])
    _, moment, iterations = bc.balance(bubble, tol=1e-8)
    assert moment < 1e-8 and iterations <= 50, (moment, iterations)

    # a registered check
    res = bc.run_check("fsa_symmetry", 4)
    assert res["passed"], res
    names = [c[0] for c in bc.list_checks()]
    assert "commutator_L4" in names

    try:
        bc.run_check("no_such_check", 4)
    except bc.ValidationError:
        pass
    else:
        raise AssertionError("unknown check accepted")

    # a short optimization on B^4
    field, trace = bc.minimize(3, seed=0, max_iter=100)
    assert trace["final_energy"] < 1e-4, trace["final_energy"]
    assert field.n == 3

    print(json.dumps({"ok": True, "g2_final": trace["final_energy"]}))


if __name__ == "__main__":
    main()
