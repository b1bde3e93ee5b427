"""Print the family-level assumption matrix and each family's estimated tail constants."""

from ftpl_lab.audit import AuditConfig, table2

if __name__ == "__main__":
    t = table2(AuditConfig(block_mc=False))
    print(t.render())
    print()
    for label, reports in t.reports.items():
        c = reports[0].constants
        print(f"{label:40s} rho1={c.rho1_hat}  rho2={c.rho2_hat}  A_l={c.A_l_hat}  A_u={c.A_u_hat}")
