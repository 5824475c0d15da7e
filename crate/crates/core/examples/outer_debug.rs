use mortsim_core::outer::*;
use mortsim_core::rng;

fn main() {
    let horizon = 120.0;
    let target = [0.1, 0.2, 0.8 * horizon];
    let loss = |t: &OuterTheta| -> f64 {
        let ivs = t.intervals();
        (0..3)
            .map(|k| {
                let (lo, hi) = t.bounds(k);
                let range = hi - lo;
                (ivs[k].center - target[k]).abs() / range + ivs[k].half_width / range
            })
            .sum()
    };
    let cfg = OuterOptConfig::default();
    let mut theta = OuterTheta::full_box(120);
    let mut history = vec![(theta, loss(&theta))];
    let mut r = rng::stream(1009, "acc-outer", 0);
    for i in 0..200 {
        let action = outer_update(&theta, &history, &cfg, &mut r);
        theta = theta.apply(&action, &cfg);
        history.push((theta, loss(&theta)));
        if i % 20 == 0 {
            eprintln!(
                "iter {i:3} loss {:.4} p0 [{:.3}±{:.3}] p [{:.3}±{:.3}] v [{:.1}±{:.1}]",
                loss(&theta), theta.p0.center, theta.p0.half_width, theta.p.center, theta.p.half_width, theta.v.center, theta.v.half_width
            );
        }
    }
    eprintln!(
        "final: p0 [{:.3}±{:.3}] p [{:.3}±{:.3}] v [{:.1}±{:.1}] target {:?}",
        theta.p0.center, theta.p0.half_width, theta.p.center, theta.p.half_width, theta.v.center, theta.v.half_width, target
    );
}
