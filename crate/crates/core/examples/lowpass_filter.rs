//! Drive one isometric muscle with a small excitation tone at several
//! frequencies and compare the response with a first-order filter.

use myoarm::harness::{effective_time_constant, first_order_attenuation_db, lowpass_attenuation_test, LowpassSpec};
use myoarm::muscle::MuscleParams;

fn main() -> myoarm::Result<()> {
    let p = MuscleParams::default();
    let tau = effective_time_constant(&p, 0.5)?;
    println!("effective time constant at a = 0.5: {:.2} ms", tau * 1e3);
    println!("  f_Hz  act_gain_dB  force_gain_dB  first_order_dB");
    for f in [1.0_f64, 2.0, 5.0, 10.0, 20.0, 50.0] {
        let spec = LowpassSpec {
            high_hz: f.max(1.5),
            ..LowpassSpec::default()
        };
        let r = lowpass_attenuation_test(&p, &spec)?;
        let tone = if f == 1.0 { r.low } else { r.high }.expect("non-zero tone");
        println!(
            "{f:6.1}  {:11.2}  {:13.2}  {:14.2}",
            tone.activation_gain_db,
            tone.force_gain_db,
            -first_order_attenuation_db(tau, f)
        );
    }
    let r = lowpass_attenuation_test(&p, &LowpassSpec::default())?;
    println!(
        "\n50 Hz vs 1 Hz: force {:.2} dB, activation {:.2} dB, first-order prediction {:.2} dB",
        r.force_difference_db.unwrap_or(f64::NAN),
        r.activation_difference_db.unwrap_or(f64::NAN),
        r.predicted_difference_db
    );
    Ok(())
}
