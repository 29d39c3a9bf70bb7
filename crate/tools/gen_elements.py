"""Regenerate data/elements/ from the Elam photon cross-section tables.

Requires `pip install xraydb`. Mass attenuation coefficients (photoabsorption
plus coherent and incoherent scattering, cm^2/g) are sampled every 1 keV over
15-160 keV. Every absorption edge inside that range is written as two rows at
the same energy: the pre-edge value first, then the post-edge value.

Densities are the average mass densities of the NIST X-ray attenuation tables
(Hubbell & Seltzer, Table 1).
"""

import os
import sys

import xraydb

E_LO_KEV = 15.0
E_HI_KEV = 160.0
STEP_KEV = 1.0

DENSITIES = [
    ("H", 8.375e-05), ("He", 1.663e-04), ("Li", 0.534), ("Be", 1.848), ("B", 2.37),
    ("C", 2.0), ("N", 1.165e-03), ("O", 1.332e-03), ("F", 1.58e-03), ("Ne", 8.385e-04),
    ("Na", 0.971), ("Mg", 1.74), ("Al", 2.699), ("Si", 2.33), ("P", 2.2),
    ("S", 2.0), ("Cl", 2.995e-03), ("Ar", 1.662e-03), ("K", 0.862), ("Ca", 1.55),
    ("Sc", 2.989), ("Ti", 4.54), ("V", 6.11), ("Cr", 7.18), ("Mn", 7.44),
    ("Fe", 7.874), ("Co", 8.9), ("Ni", 8.902), ("Cu", 8.96), ("Zn", 7.133),
    ("Ga", 5.904), ("Ge", 5.323), ("As", 5.73), ("Se", 4.5), ("Br", 7.072e-03),
    ("Kr", 3.478e-03), ("Rb", 1.532), ("Sr", 2.54), ("Y", 4.469), ("Zr", 6.506),
    ("Nb", 8.57), ("Mo", 10.22), ("Tc", 11.5), ("Ru", 12.41), ("Rh", 12.41),
    ("Pd", 12.02), ("Ag", 10.5), ("Cd", 8.65), ("In", 7.31), ("Sn", 7.31),
    ("Sb", 6.691), ("Te", 6.24), ("I", 4.93), ("Xe", 5.485e-03), ("Cs", 1.873),
    ("Ba", 3.5), ("La", 6.154), ("Ce", 6.657), ("Pr", 6.71), ("Nd", 6.9),
    ("Pm", 7.22), ("Sm", 7.46), ("Eu", 5.243), ("Gd", 7.9004), ("Tb", 8.229),
    ("Dy", 8.55), ("Ho", 8.795), ("Er", 9.066), ("Tm", 9.321), ("Yb", 6.73),
    ("Lu", 9.84), ("Hf", 13.31), ("Ta", 16.654), ("W", 19.3), ("Re", 21.02),
    ("Os", 22.57), ("Ir", 22.42), ("Pt", 21.45), ("Au", 19.32), ("Hg", 13.546),
    ("Tl", 11.72), ("Pb", 11.35), ("Bi", 9.747), ("Po", 9.32), ("At", 10.0),
    ("Rn", 9.066e-03), ("Fr", 1.0), ("Ra", 5.0), ("Ac", 10.07), ("Th", 11.72),
    ("Pa", 15.37), ("U", 18.95),
]


def mac(symbol, energy_ev):
    return float(xraydb.mu_elam(symbol, [energy_ev])[0])


def edge_step(symbol, edge_ev):
    """Pre- and post-edge MAC around the tabulated discontinuity.

    The step in the Elam spline can sit a few eV away from the nominal edge
    energy, so scan a small window and take the largest upward ratio.
    """
    probe = [edge_ev - 50.0 + 0.5 * i for i in range(201)]
    values = xraydb.mu_elam(symbol, probe)
    i = max(range(len(values) - 1), key=lambda k: values[k + 1] / values[k])
    return float(values[i]), float(values[i + 1])


def main(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "densities.csv"), "w") as f:
        f.write("z,symbol,density_g_per_cm3\n")
        for z, (sym, rho) in enumerate(DENSITIES, start=1):
            assert xraydb.atomic_symbol(z) == sym, (z, sym)
            f.write(f"{z},{sym},{rho!r}\n")

    n_steps = int(round((E_HI_KEV - E_LO_KEV) / STEP_KEV))
    regular = [E_LO_KEV + i * STEP_KEV for i in range(n_steps + 1)]
    for z, (sym, _) in enumerate(DENSITIES, start=1):
        edges = sorted(
            e.energy / 1000.0
            for e in xraydb.xray_edges(sym).values()
            if E_LO_KEV < e.energy / 1000.0 < E_HI_KEV
        )
        rows = [
            (e, mac(sym, e * 1000.0))
            for e in regular
            if all(abs(e - x) > 0.01 for x in edges)
        ]
        for e in edges:
            pre, post = edge_step(sym, e * 1000.0)
            rows.append((e, pre))
            rows.append((e, post))
        rows.sort(key=lambda r: r[0])  # stable: pre-edge row stays first
        with open(os.path.join(out_dir, f"z{z:02d}.csv"), "w") as f:
            f.write("energy_kev,mac_cm2_per_g\n")
            for e, m in rows:
                f.write(f"{e!r},{m:.6e}\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/elements")
