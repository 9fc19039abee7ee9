use f4tele::analytic::{mm1_oracle, slot_wait_table};
use f4tele::config::ConfigFile;
use f4tele::model::{RackClass, ServiceModel, ValidatedConfig};
use f4tele::sim::{run_simulation, Mode};

fn config(text: &str) -> ValidatedConfig {
    ConfigFile::parse(text).unwrap().build().unwrap()
}

fn canonical(extra_traffic: &str, cluster: &str) -> ValidatedConfig {
    config(&format!(
        "[cluster]\nn_data_racks = 24\nbundle_capacity = 4\n{cluster}\n\
         [partition]\nhotspot_racks = 20-23\n\
         [schedule]\nslot_length = 0.01\n\
         [service]\nmean_service = 0.0005\n\
         [traffic]\n{extra_traffic}\n"
    ))
}

#[test]
fn zero_traffic_produces_nothing() {
    let cfg = canonical("lambda_low = 0\nlambda_hot = 0", "");
    for mode in Mode::ALL {
        let r = run_simulation(&cfg, mode, 1, 5.0);
        assert_eq!(r.served(), 0);
        for s in &r.per_set {
            assert_eq!((s.arrivals, s.drops_deadline, s.drops_overflow), (0, 0, 0));
        }
        assert!(r.per_flow.is_empty());
    }
}

#[test]
fn zero_traffic_flows_have_zero_throughput() {
    let cfg = canonical("lambda_low = 0\nlambda_hot = 0\nsource = tcp\nflow_size = uniform(1000000, 10000000)", "");
    let r = run_simulation(&cfg, Mode::F4Tele, 1, 5.0);
    assert!(r.per_flow.is_empty());
    assert!(r.mean_throughput(None).is_nan() || r.mean_throughput(None) == 0.0);
}

#[test]
fn benchmark_matches_mm1_at_half_load() {
    let cfg = config(
        "[cluster]\nn_data_racks = 1\nn_nms_racks = 1\nbundle_capacity = 1\nprimary_buffer = 100000\n\
         [service]\nmean_service = 0.001\n[traffic]\nlambda_low = 500\n",
    );
    let r = run_simulation(&cfg, Mode::Benchmark, 7, 800.0);
    let oracle = mm1_oracle(500.0, &ServiceModel::exponential(1e-3)).unwrap();
    let w = r.overall_mean_wait();
    assert!(r.per_set[0].wait_samples > 300_000);
    assert!((w - oracle).abs() / oracle < 0.05, "sim {w} vs {oracle}");
}

#[test]
fn hotspot_holds_the_bundle_half_the_time() {
    let cfg = canonical("lambda_low = 50\nbeta = 0.1", "");
    for seed in [1, 2] {
        let r = run_simulation(&cfg, Mode::F4Tele, seed, 20.0);
        let hot: f64 = r.sets_of(RackClass::Hotspot).map(|s| s.service_time_fraction).sum();
        assert!((hot - 0.5).abs() <= 0.01, "{hot}");
        for s in r.sets_of(RackClass::NonHotspot) {
            assert!((s.service_time_fraction - 0.1).abs() <= 0.01);
        }
        let total: f64 = r.per_set.iter().map(|s| s.service_time_fraction).sum();
        assert!(total <= 1.0 + 1e-9);
    }
}

#[test]
fn benchmark_mirrors_never_switch() {
    let cfg = canonical("lambda_low = 50\nbeta = 0.1", "");
    let r = run_simulation(&cfg, Mode::Benchmark, 3, 10.0);
    for s in &r.per_set {
        assert!((s.service_time_fraction - 1.0 / 6.0).abs() < 1e-9);
    }
}

#[test]
fn conservation_in_every_mode() {
    let cfg = canonical(
        "lambda_low = 400\nbeta = 0.5\nqos_deadline = 0.05",
        "primary_buffer = 20\nbackup_buffer = 30",
    );
    for mode in Mode::ALL {
        let r = run_simulation(&cfg, mode, 11, 10.0);
        assert!(r.conservation_holds(), "{mode}");
        let drops: u64 = r
            .per_set
            .iter()
            .map(|s| s.drops_overflow + s.drops_deadline)
            .sum();
        if mode != Mode::Benchmark {
            assert!(drops > 0, "{mode} should lose packets under this load");
        }
    }
}

#[test]
fn identical_seed_identical_report() {
    let cfg = canonical("lambda_low = 50\nbeta = 0.1", "");
    let a = run_simulation(&cfg, Mode::F4Tele, 5, 5.0);
    let b = run_simulation(&cfg, Mode::F4Tele, 5, 5.0);
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a, b);
    let c = run_simulation(&cfg, Mode::F4Tele, 6, 5.0);
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn infinite_deadline_never_drops() {
    let cfg = canonical("lambda_low = 100\nbeta = 0.1\nqos_deadline = inf", "");
    let r = run_simulation(&cfg, Mode::F4TelePlus, 2, 5.0);
    assert!(r.per_set.iter().all(|s| s.drops_deadline == 0));
}

#[test]
fn waits_are_causal() {
    let cfg = canonical("lambda_low = 50\nbeta = 0.1", "");
    let r = run_simulation(&cfg, Mode::F4Tele, 9, 5.0);
    for s in &r.per_set {
        assert!(s.wait_samples > 0);
        assert!(s.mean_wait >= 0.0 && s.p99_wait >= 0.0);
    }
}

#[test]
fn low_load_vacations_cause_no_deadline_drops() {
    // Cycle is 100 ms; the longest vacation of a non-hotspot set is 90 ms.
    let cfg = canonical("lambda_low = 5\nbeta = 0.1\nqos_deadline = 0.1", "");
    let r = run_simulation(&cfg, Mode::F4Tele, 4, 20.0);
    assert!(r.per_set.iter().all(|s| s.drops_deadline == 0));
    assert!(r.served() > 0);
}

#[test]
fn zero_drain_keeps_vacation_arrivals_in_backup() {
    // A 5-packet primary buffer cannot hold a 90 ms vacation at 50 packets/s,
    // but the backup keeps every vacation arrival until the set's slot.
    let cluster = "backup_drain_rate = 0\nprimary_buffer = 5";
    let cfg = canonical("lambda_low = 50\nlambda_hot = 50", cluster);
    let with_loop = run_simulation(&cfg, Mode::F4Tele, 8, 20.0);
    let without = run_simulation(&cfg, Mode::F4TelePlus, 8, 20.0);
    assert!(with_loop.conservation_holds());
    let lost = |r: &f4tele::sim::SimReport| -> u64 {
        r.sets_of(RackClass::NonHotspot).map(|s| s.drops_overflow).sum()
    };
    assert_eq!(lost(&with_loop), 0);
    assert!(lost(&without) > 100, "{}", lost(&without));
}

#[test]
fn deterministic_slot_capacity() {
    // d = 10 ms, service d/10: a set holding ten packets at slot start
    // clears them within the slot even when services may not cross the end.
    let cfg = config(
        "[cluster]\nn_data_racks = 2\nbundle_capacity = 1\n\
         [partition]\nhotspot_racks = 1\n[schedule]\nslot_length = 0.01\n\
         [service]\nmean_service = 0.001\ndistribution = deterministic\n\
         [simulation]\nnon_preemptive = false\nwarmup_fraction = 0\n\
         [traffic]\nlambda_low = 400\nlambda_hot = 400\n",
    );
    let r = run_simulation(&cfg, Mode::F4Tele, 1, 50.0);
    // 400/s over a 20 ms cycle is 8 packets per cycle, below the 10 per slot.
    for s in &r.per_set {
        assert!(s.queued_at_end <= 12, "{s:?}");
        assert!(s.wait_samples > 0);
        assert!(s.mean_wait < 0.02);
    }
}

#[test]
fn mode_dominance_in_served_packets() {
    let cfg = canonical(
        "lambda_low = 150\nbeta = 0.5",
        "primary_buffer = 10\nbackup_buffer = 1000",
    );
    let mut wins = 0;
    for seed in 0..10 {
        let b = run_simulation(&cfg, Mode::Benchmark, seed, 5.0).served();
        let f = run_simulation(&cfg, Mode::F4Tele, seed, 5.0).served();
        let p = run_simulation(&cfg, Mode::F4TelePlus, seed, 5.0).served();
        if b >= f && f >= p {
            wins += 1;
        }
    }
    assert!(wins >= 9, "{wins}/10");
}

#[test]
fn expected_phase_matches_slot_table() {
    let cfg = canonical("lambda_low = 10\nbeta = 0.1", "");
    let r = run_simulation(&cfg, Mode::F4Tele, 3, 10.0);
    for s in &r.per_set {
        let table = slot_wait_table(cfg.schedule(), cfg.partition(), s.set_id).unwrap();
        assert!((s.expected_phase_wait - table.mean_wait_to_slot).abs() < 1e-12, "{s:?}");
    }
    let bench = run_simulation(&cfg, Mode::Benchmark, 3, 10.0);
    assert!(bench.per_set.iter().all(|s| s.expected_phase_wait == 0.0));
}

#[test]
fn phase_adjusted_wait_agrees_with_sample_mean() {
    // Both estimate the same mean; the adjusted one has far less spread.
    let cfg = canonical("lambda_low = 20\nbeta = 0.1", "");
    let (mut raw, mut adj) = (Vec::new(), Vec::new());
    for seed in 1..=8 {
        let r = run_simulation(&cfg, Mode::F4Tele, seed, 20.0);
        raw.push(r.mean_wait(RackClass::NonHotspot));
        adj.push(r.phase_adjusted_wait(Some(RackClass::NonHotspot)));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let spread = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    assert!((mean(&raw) - mean(&adj)).abs() / mean(&adj) < 0.02, "{raw:?} {adj:?}");
    assert!(spread(&adj) < spread(&raw), "{raw:?} {adj:?}");
}

#[test]
fn rto_floor_makes_loopback_help_tcp() {
    // With a kernel-like 200 ms timer floor, retransmissions after a vacation
    // are slow enough that holding packets in the backup buffer pays off.
    let text = |floor: &str| {
        format!(
            "[cluster]\nn_data_racks = 24\nbundle_capacity = 4\nprimary_buffer = 64\nbackup_buffer = 1000\n\
             [partition]\nhotspot_racks = 20-23\n[schedule]\nslot_length = 0.01\n\
             [service]\ndistribution = deterministic\n\
             [traffic]\nlambda_low = 0.2\nbeta = 0.1\nsource = tcp\n\
             flow_size = uniform(1000000, 10000000)\n{floor}\n"
        )
    };
    let cfg = config(&text("tcp_min_rto = 0.2"));
    let mut wins = 0;
    for seed in 1..=5 {
        let f = run_simulation(&cfg, Mode::F4Tele, seed, 20.0).mean_throughput(None);
        let p = run_simulation(&cfg, Mode::F4TelePlus, seed, 20.0).mean_throughput(None);
        wins += usize::from(f > p);
    }
    assert!(wins >= 4, "{wins}/5");
}
