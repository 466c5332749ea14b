//! Intervening on a feature map of the observations. With the identity map
//! and no common causes to adjust for, the identification formula collapses
//! to the observational conditional.
//!
//! Run with `cargo run --example backdoor_reduction`.

use causalrep::scm::{
    functional_do, functional_do_backdoor, identity_feature, observational_dist, BinaryScm, EventSpec, FunctionalQuery,
    Mechanism, Variable,
};

fn main() -> causalrep::Result<()> {
    let scm = BinaryScm::new(vec![
        Variable::root("C", 0.35),
        Variable::child("X1", &[0], Mechanism::Id, 0.2),
        Variable::child("X2", &[0], Mechanism::Id, 0.3),
        Variable::child("Y", &[1, 2], Mechanism::Or, 0.1),
    ])?;
    let query = FunctionalQuery {
        features: vec!["X1".into(), "X2".into()],
        common_causes: vec![],
        outcome: EventSpec::eq("Y", true),
    };
    let obs = observational_dist(&scm)?;
    println!("z  P(Y | X = z)  identified  backdoor");
    for z in 0..4u64 {
        let given = [EventSpec::eq("X1", z & 1 == 1), EventSpec::eq("X2", z & 2 == 2)];
        let plain = obs.conditional(&[query.outcome.clone()], &given)?;
        let a = functional_do(&scm, &query, &identity_feature, z)?;
        let b = functional_do_backdoor(&scm, &query, &identity_feature, z)?;
        println!("{z}  {plain:12.6}  {a:10.6}  {b:8.6}");
    }

    // A coarse feature with C as the adjustment set.
    let adjusted = FunctionalQuery {
        common_causes: vec!["C".into()],
        ..query
    };
    let count = |x: &[bool]| x.iter().filter(|&&b| b).count() as u64;
    for z in 0..3 {
        println!("do(#active = {z}): {:.4}", functional_do(&scm, &adjusted, &count, z)?);
    }
    Ok(())
}
