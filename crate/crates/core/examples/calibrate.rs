//! Calibration probe: prints estimates for the built-in scenarios so their
//! default parameters can be tuned against the expected trends.

use cpssv_core::scenarios::*;
use cpssv_core::smc::{estimate, SmcConfig};
use cpssv_core::text::parse_property;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let which = args.first().map(String::as_str).unwrap_or("flag");
    match which {
        "flag" => flag(),
        "bee" => bee(&args[1..]),
        "beestab" => bee_stability(),
        "city" => city(&args[1..]),
        "citymech" => city_mech(),
        other => eprintln!("unknown probe {other}"),
    }
}

fn flag() {
    let (doc, dep) = gen_capture_flag();
    let formula = parse_property(dep.property.as_deref().unwrap()).unwrap();
    let cfg = SmcConfig::fixed(10_000, 42);
    let t = std::time::Instant::now();
    let r = estimate(&doc, &dep, &formula, &cfg).unwrap();
    println!(
        "flag: p_hat={:.4} ci=[{:.4},{:.4}] mean_sat={:?} wall={}ms ({}ms total)",
        r.p_hat,
        r.ci_lo,
        r.ci_hi,
        r.mean_sat_time,
        r.wall_ms,
        t.elapsed().as_millis()
    );
}

fn bee(args: &[String]) {
    let runs: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(200);
    let mut grid = GridSpec::default_arena();
    if let Ok(v) = std::env::var("BEE_MOVE") { grid.move_mean = v.parse().unwrap(); }
    for robots in [1u32, 3, 9, 15, 21, 27, 33] {
        let (doc, dep) = gen_honeybee(&grid, robots, BeeStart::Scattered, 1000.0, None).unwrap();
        let formula = parse_property(dep.property.as_deref().unwrap()).unwrap();
        let cfg = SmcConfig::fixed(runs, 7);
        let t = std::time::Instant::now();
        let r = estimate(&doc, &dep, &formula, &cfg).unwrap();
        println!(
            "bee n={robots}: threshold={} p_hat={:.3} mean_sat={:?} ({} ms)",
            cluster_threshold(robots),
            r.p_hat,
            r.mean_sat_time,
            t.elapsed().as_millis()
        );
    }
}

fn bee_stability() {
    let mut grid = GridSpec::default_arena();
    if let Ok(v) = std::env::var("BEE_MOVE") { grid.move_mean = v.parse().unwrap(); }
    println!("move_mean={}", grid.move_mean);
    let starts = [
        ("scattered", BeeStart::Scattered),
        ("at30", BeeStart::AllAtTemperature(30.0)),
        ("at22", BeeStart::AllAtTemperature(22.0)),
    ];
    for (name, start) in starts {
        let (doc, dep) = gen_honeybee(&grid, 20, start, 4000.0, None).unwrap();
        let formula = parse_property(dep.property.as_deref().unwrap()).unwrap();
        let cfg = SmcConfig::fixed(300, 11);
        let t = std::time::Instant::now();
        let r = estimate(&doc, &dep, &formula, &cfg).unwrap();
        println!(
            "bee20 {name}: p_hat={:.3} mean_sat={:?} ({} ms)",
            r.p_hat,
            r.mean_sat_time,
            t.elapsed().as_millis()
        );
    }
}

fn city(args: &[String]) {
    let runs: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(300);
    let spec = CitySpec::desk(7);

    println!("--- uav count sweep");
    for uavs in [2u32, 4, 6, 8] {
        let (doc, dep) = gen_city(&spec, uavs, 8, Protocol::Bluetooth, None).unwrap();
        let formula = parse_property(dep.property.as_deref().unwrap()).unwrap();
        let r = estimate(&doc, &dep, &formula, &SmcConfig::fixed(runs, 3)).unwrap();
        println!("uavs={uavs}: p_hat={:.3} sat={:?} wall={}ms", r.p_hat, r.mean_sat_time, r.wall_ms);
    }
    println!("--- station sweep");
    for st in [2usize, 4, 6, 8] {
        let (doc, dep) = gen_city(&spec, 8, st, Protocol::Bluetooth, None).unwrap();
        let formula = parse_property(dep.property.as_deref().unwrap()).unwrap();
        let r = estimate(&doc, &dep, &formula, &SmcConfig::fixed(runs, 3)).unwrap();
        println!("stations={st}: p_hat={:.3} wall={}ms", r.p_hat, r.wall_ms);
    }
    println!("--- distance sweep");
    let dist_budget: f64 = std::env::var("CITY_DIST_H").ok().and_then(|v| v.parse().ok()).unwrap_or(40.0);
    for d in [1u32, 2, 3, 4] {
        let mut spec_d = spec.clone();
        spec_d.horizon_time = dist_budget;
        match gen_city(&spec_d, 8, 8, Protocol::Bluetooth, Some(d)) {
            Ok((doc, dep)) => {
                let formula = parse_property(dep.property.as_deref().unwrap()).unwrap();
                let r = estimate(&doc, &dep, &formula, &SmcConfig::fixed(runs, 3)).unwrap();
                println!("distance={d}: p_hat={:.3} sat={:?}", r.p_hat, r.mean_sat_time);
            }
            Err(e) => println!("distance={d}: {e}"),
        }
    }
    println!("--- protocol comparison");
    for uavs in [6u32, 7, 8] {
        let mut line = format!("uavs={uavs}:");
        for proto in [Protocol::Bluetooth, Protocol::Zigbee] {
            let (doc, dep) = gen_city(&spec, uavs, 6, proto, None).unwrap();
            let formula = parse_property(dep.property.as_deref().unwrap()).unwrap();
            let r = estimate(&doc, &dep, &formula, &SmcConfig::fixed(runs, 3)).unwrap();
            line.push_str(&format!(" {}={:.3}", proto.name(), r.p_hat));
        }
        println!("{line}");
    }
    println!("--- search area sweep");
    for area in [20usize, 18, 16, 14] {
        let mut spec_a = CitySpec::desk(7);
        spec_a.search_area = Some(area);
        let (doc, dep) = gen_city(&spec_a, 8, 8, Protocol::Bluetooth, None).unwrap();
        let formula = parse_property(dep.property.as_deref().unwrap()).unwrap();
        let r = estimate(&doc, &dep, &formula, &SmcConfig::fixed(runs, 3)).unwrap();
        println!("area={area}: p_hat={:.3}", r.p_hat);
    }
}

fn city_mech() {
    use cpssv_core::engine::run;
    use cpssv_core::weave::{instantiate, Horizon};
    use std::sync::Arc;
    let spec = CitySpec::desk(7);
    for proto in [Protocol::Bluetooth, Protocol::Zigbee] {
        let (doc, dep) = gen_city(&spec, 8, 6, proto, None).unwrap();
        let net = Arc::new(instantiate(&doc, &dep).unwrap());
        let (mut crashes, mut oob, mut notifies, mut saves) = (0u64, 0u64, 0u64, 0u64);
        let n_runs = 200;
        for seed in 0..n_runs {
            let trace = run(&net, seed, Horizon { time: spec.horizon_time, max_events: 1_000_000 });
            for e in &trace.entries {
                let class_idx = trace.network.instances[e.instance as usize].class_idx;
                let to_id = trace.network.classes[class_idx].state_id(e.to as usize);
                match to_id {
                    "Crashed" => crashes += 1,
                    "OutofBattery" => oob += 1,
                    "Saved" => saves += 1,
                    _ => {}
                }
                if e.writes.0.iter().any(|w| w.name == "avoid_until") {
                    notifies += 1;
                }
            }
        }
        println!(
            "{}: crashes/run={:.2} oob/run={:.2} saves/run={:.1} notify-excursions/run={:.2}",
            proto.name(),
            crashes as f64 / n_runs as f64,
            oob as f64 / n_runs as f64,
            saves as f64 / n_runs as f64,
            notifies as f64 / n_runs as f64,
        );
    }
}
