//! Shared generators for the acceptance and property suites.

use contact_opt::expr::Expr;
use contact_opt::geometry::{ContactChart, ContactSystem};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random polynomial over `vars`: a sum of monomials of total degree at most
/// `max_degree` with coefficients in the given half-width.
pub fn random_polynomial(
    rng: &mut ChaCha8Rng,
    vars: &[String],
    terms: usize,
    max_degree: usize,
    coeff: f64,
) -> Expr {
    let mut acc = Expr::num(0.0);
    for _ in 0..terms {
        let mut term = Expr::num(rng.random_range(-coeff..coeff));
        let degree = rng.random_range(0..=max_degree);
        for _ in 0..degree {
            let var = &vars[rng.random_range(0..vars.len())];
            term = term.mul(Expr::var(var));
        }
        acc = acc.add(term);
    }
    acc
}

/// Random contact system with polynomial Hamiltonian of degree <= 3 on the
/// standard chart.
pub fn random_contact_system(rng: &mut ChaCha8Rng, n: usize) -> ContactSystem {
    let chart = ContactChart::darboux(n);
    let names = chart.names();
    let terms = rng.random_range(3..8);
    let h = random_polynomial(rng, &names, terms, 3, 1.0);
    ContactSystem::new(chart, h).expect("chart-closed polynomial")
}

/// Random smooth expression mixing polynomials and trigonometry, safe to
/// evaluate and differentiate everywhere.
pub fn random_polytrig(rng: &mut ChaCha8Rng, vars: &[String], depth: usize) -> Expr {
    if depth == 0 {
        return if rng.random_bool(0.6) {
            Expr::var(&vars[rng.random_range(0..vars.len())])
        } else {
            Expr::num(rng.random_range(-2.0..2.0))
        };
    }
    match rng.random_range(0..6) {
        0 => random_polytrig(rng, vars, depth - 1).add(random_polytrig(rng, vars, depth - 1)),
        1 => random_polytrig(rng, vars, depth - 1).sub(random_polytrig(rng, vars, depth - 1)),
        2 => random_polytrig(rng, vars, depth - 1).mul(random_polytrig(rng, vars, depth - 1)),
        3 => Expr::call(
            contact_opt::expr::Func::Sin,
            random_polytrig(rng, vars, depth - 1),
        ),
        4 => Expr::call(
            contact_opt::expr::Func::Cos,
            random_polytrig(rng, vars, depth - 1),
        ),
        _ => {
            let k = rng.random_range(2..=3);
            random_polytrig(rng, vars, depth - 1).pow(Expr::num(k as f64))
        }
    }
}
