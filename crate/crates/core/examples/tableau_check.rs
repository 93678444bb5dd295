//! Algebraic stability and order conditions of the built-in tableaux and of a
//! hand-written one.

use gfrk::tableau::{
    check_order_conditions, dirk4, gauss4, stability_report, ButcherTableau,
};

fn main() -> gfrk::Result<()> {
    let midpoint = ButcherTableau::new("implicit-midpoint", &[vec![0.5]], &[1.0])?;
    let euler = ButcherTableau::new("explicit-euler", &[vec![0.0]], &[1.0])?;
    for t in [gauss4(), dirk4(), midpoint, euler] {
        let rep = stability_report(&t, 1e-12);
        println!("{} ({:?})", t.name(), t.kind());
        println!("  c = {:?}", t.c());
        println!("  M eigenvalues {:?}", rep.m_eigenvalues);
        println!("  algebraically stable: {}", rep.algebraically_stable);
        for p in 1..=4 {
            if check_order_conditions(&t, p)? {
                println!("  satisfies order {p}");
            }
        }
    }
    Ok(())
}
