use prandtl3d::grid::*;
use prandtl3d::state::*;

fn main() {
    let prof = |z: f64| (z + z * z + z * z * z / 3.0) * (-z).exp();
    for l in [1.0f64, 2.0, 4.0] {
        for nz in [65usize, 129, 257, 513] {
            let g = GridSpec::new(8, 8, nz, 16.0, Stretch::Rational { l }).unwrap();
            let u0 = g.sample_profile(prof);
            let rep = check_compatibility(&u0, &g.zeros(), &OuterFlow::zero(), 1e-2).unwrap();
            let rs: Vec<String> = rep.conditions.iter().map(|c| format!("{}={:.2e}", &c.name[..6.min(c.name.len())], c.residual)).collect();
            println!("L={l} nz={nz}: {}", rs.join(" "));
        }
    }
}
