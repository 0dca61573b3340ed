use std::f64::consts::PI;

use gustbench_core::signal_chain::{Biquad, FilterError};

fn db(g: f64) -> f64 {
    20.0 * g.log10()
}

/// Steady-state amplitude of the filtered sine, measured in the time domain
/// as an oracle independent of the transfer-function formula.
fn measured_gain(f: &mut Biquad, freq: f64) -> f64 {
    let fs = f.sample_rate();
    let settle = (2.0 * fs) as usize;
    let window = (fs * 10.0 / freq).ceil() as usize;
    let mut peak: f64 = 0.0;
    for k in 0..settle + window {
        let y = f.step((2.0 * PI * freq * k as f64 / fs).sin());
        if k >= settle {
            peak = peak.max(y.abs());
        }
    }
    peak
}

#[test]
fn controller_filter_designs() {
    for fc in [6.0, 10.0] {
        let f = Biquad::butterworth_lowpass(fc, 500.0).unwrap();
        assert!((f.dc_gain() - 1.0).abs() <= 1e-3);
        let at_cut = db(f.gain_at(fc));
        assert!((at_cut + 3.0).abs() <= 0.2, "{fc} Hz: {at_cut} dB");
        assert!(f.pole_radius() < 1.0);
    }
    let six = Biquad::butterworth_lowpass(6.0, 500.0).unwrap();
    assert!(db(six.gain_at(60.0)) <= -38.0);
}

#[test]
fn transfer_function_matches_time_domain() {
    for (fc, probe) in [(6.0, 6.0), (6.0, 60.0), (10.0, 10.0), (10.0, 25.0)] {
        let mut f = Biquad::butterworth_lowpass(fc, 500.0).unwrap();
        let predicted = f.gain_at(probe);
        let measured = measured_gain(&mut f, probe);
        assert!((measured - predicted).abs() < 2e-3 * predicted.max(1e-2), "{fc}/{probe}: {measured} vs {predicted}");
    }
}

#[test]
fn step_response_settles_in_half_a_second() {
    let mut f = Biquad::butterworth_lowpass(6.0, 500.0).unwrap();
    let y: Vec<f64> = (0..500).map(|_| f.step(1.0)).collect();
    assert!(y[250..].iter().all(|v| (v - 1.0).abs() <= 1e-3));
}

#[test]
fn cutoff_at_or_above_nyquist_is_rejected() {
    assert!(matches!(Biquad::butterworth_lowpass(250.0, 500.0), Err(FilterError::InvalidCutoff { .. })));
}
