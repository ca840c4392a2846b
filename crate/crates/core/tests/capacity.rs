use lucid_core::capacity::*;
use proptest::prelude::*;

fn sig3(x: f64) -> f64 {
    let e = x.abs().log10().floor() as i32 - 2;
    (x / 10f64.powi(e)).round() * 10f64.powi(e)
}

#[test]
fn firewall_cells() {
    // N / i + f * log2 N with N = 2^16, i = 0.1 s.
    let cases = [(1e4, 815_360.0, 0.0008), (1e5, 2_255_360.0, 0.0022), (1e6, 16_655_360.0, 0.0166)];
    for (f, rate, util) in cases {
        let r = recirc_rate(&RecircParams::new(1 << 16, 0.1, f)).unwrap();
        assert!((r.rate_pps - rate).abs() < 1e-6, "{}", r.rate_pps);
        assert_eq!(sig3(r.rate_pps), sig3(rate));
        // The printed percentages are truncated, not rounded.
        let pct = (r.utilization * 100.0 * 100.0).floor() / 100.0;
        assert!((pct - util * 100.0).abs() < 1e-9, "{pct}");
    }
}

#[test]
fn no_flows_and_long_interval_tend_to_zero() {
    let r = recirc_rate(&RecircParams::new(1 << 16, 1e12, 0.0)).unwrap();
    assert!(r.rate_pps < 1e-6);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert_eq!(
        recirc_rate(&RecircParams::new(1000, 0.1, 1.0)),
        Err(CapacityError::Entries(1000))
    );
    assert!(recirc_rate(&RecircParams::new(1024, 0.0, 1.0)).is_err());
    assert!(recirc_rate(&RecircParams::new(1024, 1.0, -1.0)).is_err());
}

#[test]
fn naive_min_packet_size_is_above_slot_size() {
    let p = RecircParams::new(1 << 16, 0.1, 1e4);
    let r = recirc_rate(&p).unwrap();
    let b = naive_min_pkt_bytes(&r, &p);
    assert!(b > 125.0 && b < 125.2, "{b}");
}

proptest! {
    #[test]
    fn rate_is_monotone(k in 1u32..30, i in 0.001f64..100.0, f in 0.0f64..1e7) {
        let base = recirc_rate(&RecircParams::new(1 << k, i, f)).unwrap().rate_pps;
        let more_n = recirc_rate(&RecircParams::new(1 << (k + 1), i, f)).unwrap().rate_pps;
        let more_f = recirc_rate(&RecircParams::new(1 << k, i, f + 1.0)).unwrap().rate_pps;
        let less_i = recirc_rate(&RecircParams::new(1 << k, i / 2.0, f)).unwrap().rate_pps;
        prop_assert!(more_n > base);
        prop_assert!(more_f > base);
        prop_assert!(less_i > base);
    }
}
