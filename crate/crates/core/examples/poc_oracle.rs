//! Probabilities of causation in a five-variable binary model, computed by
//! exact enumeration, next to the interventional lower bound.
//!
//! Run with `cargo run --example poc_oracle`.

use causalrep::scm::{conditional_pns_oracle, correlation, observational_dist, pns_lower_bound, true_poc, EventSpec};
use causalrep::synth::gen_binary_poc;

fn main() -> causalrep::Result<()> {
    let scm = gen_binary_poc(0.5)?;
    let z1 = EventSpec::eq("Z1", true);
    let y1 = EventSpec::eq("Y1", true);

    let poc = true_poc(&scm, &z1, &y1)?;
    let lb = pns_lower_bound(&scm, &z1, &y1)?;
    println!(
        "Z1 -> Y1: PN {:.3}, PS {:.3}, PNS {:.3}, lower bound {:.3}",
        poc.pn, poc.ps, poc.pns, lb
    );

    println!("\n  p   corr(Z1,Z2)  PNS(Z2->Y1 | Z1)  PNS(Z1->Y1 | Z2)  bound Z1->Y2");
    for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let scm = gen_binary_poc(p)?;
        let corr = correlation(&observational_dist(&scm)?, "Z1", "Z2")?;
        // Hold the other factor at 1 in both worlds.
        let spurious = conditional_pns_oracle(&scm, &EventSpec::eq("Z2", true), &[EventSpec::eq("Z1", true)], &y1)?;
        let genuine = conditional_pns_oracle(&scm, &z1, &[EventSpec::eq("Z2", true)], &y1)?;
        let y2 = pns_lower_bound(&scm, &z1, &EventSpec::eq("Y2", true))?;
        println!("{p:5.2}  {corr:11.3}  {spurious:16.3}  {genuine:16.3}  {y2:12.3}");
    }
    Ok(())
}
