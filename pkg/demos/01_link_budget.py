"""
Link budget and the payload catalog
===================================

Walk from EIRP to offered capacity for each of the nine payload options.
"""

from satrrm.linkbudget import (
    LinkParams,
    ModcodTable,
    build_catalog,
    calibrate_link,
    cnr_db,
    combine_cinr,
    load_catalog,
    validate_catalog,
)

catalog = load_catalog()
report = validate_catalog(catalog)
print("catalog consistent:", report.passed, " worst residual %.2e" % report.max_residual)

# Fit the two unknowns of the chain (path attenuation and interference) to
# the printed CINR column.
params = calibrate_link(catalog)
print("A = %.4f dB, CIR = %.4f dB" % (params.path_attenuation_a, params.default_cir))

print("\nopt   BW[MHz]  P[dBW]   CNR    CINR   C[Mbps]")
for o in catalog:
    cnr = cnr_db(o.eirp_3db, params, o.bandwidth)
    cinr = combine_cinr(params.default_cir, cnr)
    print(f"{o.index:3d}  {o.bandwidth / 1e6:7.0f}  {o.power:6.1f}  {cnr:6.2f}  {cinr:6.2f}  {o.offered_capacity / 1e6:8.2f}")

# Rebuilding the catalog from the fitted chain lands every row on the same
# modcod step. Capacities then differ from the printed ones only by the
# rounding of the printed spectral efficiency.
rebuilt = build_catalog(catalog, params, ModcodTable.from_catalog(catalog))
print("\nsame modcod steps:", all(a.spectral_efficiency == b.spectral_efficiency for a, b in zip(catalog, rebuilt)))
print("capacity drift [kbps]:", [round((b.offered_capacity - a.offered_capacity) / 1e3, 1) for a, b in zip(catalog, rebuilt)])

# Interference puts a ceiling on CINR however much power goes in.
for eirp in (50, 60, 70, 80):
    print("EIRP %d dBW -> CINR %.2f dB" % (eirp, combine_cinr(params.default_cir, cnr_db(eirp, params, 500e6))))

no_interference = LinkParams(default_cir=float("inf"))
print("without interference, 80 dBW ->", round(combine_cinr(no_interference.default_cir, cnr_db(80, no_interference, 500e6)), 2), "dB")
