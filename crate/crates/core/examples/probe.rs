use fpsteer_core::DensitySpec;

fn main() {
    let reference = DensitySpec::GeneralizedLogistic { shape: 2.0, location: 0.0 };
    let raw = reference.moments_auto(4).unwrap();
    let (mu, sd) = reference.mean_and_sd().unwrap();
    // standardized target moments via binomial expansion
    let binom = |p: usize, i: usize| -> f64 {
        let mut num = 1.0; let mut den = 1.0;
        for x in 0..i { num *= (p - x) as f64; den *= (x + 1) as f64; }
        num / den
    };
    let mom = |i: usize| if i == 0 { 1.0 } else { raw.values()[i - 1] };
    let t: Vec<f64> = (0..=4).map(|p| {
        (0..=p).map(|i| binom(p, i) * (-mu).powi((p - i) as i32) * mom(i)).sum::<f64>() / sd.powi(p as i32)
    }).collect();
    println!("target std moments: {t:?}");
    for (hw, nodes) in [(12.0, 4001usize), (30.0, 8001), (60.0, 16001)] {
        // Simpson over z in [-hw, hw]
        let h = 2.0 * hw / (nodes - 1) as f64;
        let mut s = [0.0f64; 5];
        for i in 0..nodes {
            let z = -hw + h * i as f64;
            let w = if i == 0 || i == nodes - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let r = reference.pdf(mu + sd * z) * sd * w * h / 3.0;
            let mut zp = 1.0;
            for m in 0..=4 { s[m] += r * zp; zp *= z; }
        }
        println!("hw={hw} nodes={nodes}: grid moments {:?}", s);
        let mismatch: Vec<f64> = (0..=4).map(|m| s[m] - t[m]).collect();
        println!("   mismatch {mismatch:?}");
    }
}
