use super::PulseTrain;
use crate::states::ProtocolParams;

/// Expected click probabilities at Bob's detectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverResponse {
    /// Data-line detector, one entry per slot.
    pub data: Vec<f64>,
    /// Monitoring detectors, one entry per interference slot: entry `j`
    /// interferes slot `j` (delayed arm) with slot `j + 1`.
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
}

/// `exp(-x) I0(x)` for `x >= 0`.
pub fn i0e(x: f64) -> f64 {
    let x = x.abs();
    if x < 30.0 {
        let q = 0.25 * x * x;
        let (mut term, mut sum, mut k) = (1.0, 1.0, 0.0);
        loop {
            k += 1.0;
            term *= q / (k * k);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        sum * (-x).exp()
    } else {
        // Hankel expansion: Σ ((2k-1)!!)² / (k! (8x)^k)
        let (mut term, mut sum) = (1.0, 1.0);
        for k in 1..12 {
            let odd = (2 * k - 1) as f64;
            term *= odd * odd / (k as f64 * 8.0 * x);
            sum += term;
        }
        sum / (2.0 * std::f64::consts::PI * x).sqrt()
    }
}

fn click(mu: f64) -> f64 {
    -(-mu).exp_m1()
}

/// Pass a pulse train through Bob's beamsplitter, data detector and
/// monitoring interferometer. `lossless` skips the channel transmittance
/// (Eve's resend in the untrusted-device scenario).
///
/// Slots in the same block interfere at zero relative phase. Slots in
/// different blocks have a uniformly random relative phase, averaged in
/// closed form.
pub fn bob_receive(train: &PulseTrain, p: &ProtocolParams, lossless: bool) -> ReceiverResponse {
    let eta = if lossless { 1.0 } else { p.eta };
    let data_scale = p.t_b * eta;
    let mon_scale = (1.0 - p.t_b) * eta / 4.0;
    let amps = &train.amplitudes;
    let data = amps.iter().map(|a| click(data_scale * a)).collect();
    let pairs = amps.len().saturating_sub(1);
    let mut m1 = Vec::with_capacity(pairs);
    let mut m2 = Vec::with_capacity(pairs);
    for j in 0..pairs {
        let (a, b) = (amps[j], amps[j + 1]);
        let (ids_a, ids_b) = (train.block_id[j], train.block_id[j + 1]);
        if a == 0.0 || b == 0.0 {
            let p = click(mon_scale * (a + b));
            m1.push(p);
            m2.push(p);
        } else if ids_a.is_some() && ids_a == ids_b {
            let (ra, rb) = (a.sqrt(), b.sqrt());
            m1.push(click(mon_scale * (ra + rb) * (ra + rb)));
            m2.push(click(mon_scale * (ra - rb) * (ra - rb)));
        } else {
            // 1 - exp(-c(a+b)) I0(2c√(ab)), written with i0e for stability.
            let x = 2.0 * mon_scale * (a * b).sqrt();
            let (ra, rb) = (a.sqrt(), b.sqrt());
            let p = 1.0 - (-mon_scale * (ra - rb) * (ra - rb)).exp() * i0e(x);
            m1.push(p);
            m2.push(p);
        }
    }
    ReceiverResponse { data, m1, m2 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ProtocolParams {
        ProtocolParams::new(0.5, 0.155, 0.5, 0.1).unwrap()
    }

    fn train(amplitudes: Vec<f64>, block_id: Vec<Option<u32>>) -> PulseTrain {
        PulseTrain { amplitudes, block_id }
    }

    #[test]
    fn i0e_reference_values() {
        // I0(1) = 1.2660658777520082, I0(10) = 2815.716628466254
        assert!((i0e(0.0) - 1.0).abs() < 1e-15);
        assert!((i0e(1.0) - 1.2660658777520082 * (-1f64).exp()).abs() < 1e-15);
        assert!((i0e(10.0) / (2815.716628466254 * (-10f64).exp()) - 1.0).abs() < 1e-13);
        // continuity across the switch point
        assert!((i0e(30.0 - 1e-9) / i0e(30.0 + 1e-9) - 1.0).abs() < 1e-10);
        assert!((i0e(40.0) / 0.0632782798752355 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn same_block_equal_pulses_are_dark_in_m2() {
        let r = bob_receive(&train(vec![1.3, 1.3], vec![Some(0), Some(0)]), &params(), true);
        assert_eq!(r.m2[0], 0.0);
        let mu = 0.5 / 4.0 * 4.0 * 1.3;
        assert!((r.m1[0] - (1.0 - (-mu as f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn different_blocks_are_symmetric_and_match_phase_average() {
        let b = 0.8;
        let p = params();
        let r = bob_receive(&train(vec![b, b], vec![Some(0), Some(1)]), &p, true);
        assert_eq!(r.m1[0], r.m2[0]);
        // Midpoint rule over θ.
        let c = (1.0 - p.t_b) / 4.0;
        let n = 20_000;
        let avg: f64 = (0..n)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
                1.0 - (-c * (2.0 * b + 2.0 * b * th.cos())).exp()
            })
            .sum::<f64>()
            / n as f64;
        assert!((r.m1[0] - avg).abs() < 1e-12);
    }

    #[test]
    fn pulse_next_to_vacuum() {
        let b = 0.6;
        let r = bob_receive(&train(vec![b, 0.0], vec![Some(0), None]), &params(), true);
        let expect = 1.0 - (-(0.5 * b / 4.0) as f64).exp();
        assert!((r.m1[0] - expect).abs() < 1e-15);
        assert_eq!(r.m1[0], r.m2[0]);
    }

    #[test]
    fn loss_scales_data_line() {
        let p = params();
        let t = train(vec![0.0, 0.2], vec![None, Some(0)]);
        let lossy = bob_receive(&t, &p, false);
        let ideal = bob_receive(&t, &p, true);
        assert!((lossy.data[1] - (1.0 - (-0.5f64 * 0.1 * 0.2).exp())).abs() < 1e-15);
        assert!((ideal.data[1] - (1.0 - (-0.5f64 * 0.2).exp())).abs() < 1e-15);
        assert_eq!(lossy.data[0], 0.0);
    }
}
