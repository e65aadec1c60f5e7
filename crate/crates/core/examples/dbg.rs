use gridlab::gridworld::{generate, solver, EnvSpec};
fn main() {
    let spec = EnvSpec::parse("KeyCorridor-S3-R2").unwrap();
    for base in (0..200u64).step_by(10) {
        let lens: Vec<usize> = (base..base + 10)
            .map(|s| solver::solve(&generate(&spec, s).unwrap()).unwrap().len())
            .collect();
        let min = *lens.iter().min().unwrap();
        let uniques = lens.iter().filter(|l| **l == min).count();
        let second = lens.iter().filter(|l| **l > min).min();
        if uniques == 1 {
            if let Some(second) = second {
                if second - min >= 3 {
                    println!("decade {base}..{}: lens {lens:?} min {min} second {second}", base + 10);
                }
            }
        }
    }
}
