//! Urban search-and-rescue: UAVs random-walk a city graph looking for
//! victims, recharge at stations, and may crash in hazardous locations.
//!
//! A victim is saved when it checks its location and finds a live UAV there
//! (occupancy is mirrored into the shared `uav_at` array by UAV hooks). A
//! hazardous entry either crashes the UAV or is survived as a near miss;
//! both publish the hazard's location and time to shared beacon globals.
//! Other UAVs receive the beacon through the interaction protocol when they
//! are within protocol range of the hazard, and then avoid the location for
//! a while. Bluetooth hears one hop away; ZigBee hears several hops and
//! re-broadcasts from the receiver's position, mesh style.

use std::fmt::Write as _;

use thiserror::Error;

use crate::rng::CounterRng;
use crate::text::{parse_deployment, parse_model, Deployment, ModelDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Bluetooth,
    Zigbee,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Bluetooth => "bluetooth",
            Protocol::Zigbee => "zigbee",
        }
    }

    /// Reception range in hops from the hazard.
    fn range(self) -> u32 {
        match self {
            Protocol::Bluetooth => 1,
            Protocol::Zigbee => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CitySpec {
    pub buildings: usize,
    pub seed: u64,
    /// Extra road chords on top of the ring that keeps the city connected.
    pub extra_roads: usize,
    /// Fraction of locations that are hazardous.
    pub hazard_zone: f64,
    /// Per-visit probability of a hazard event in a hazardous location.
    pub hazard_prob: f64,
    /// Probability that a hazard event crashes the UAV (else a near miss).
    pub crash_given_hazard: f64,
    pub battery_capacity: i64,
    pub consume_lo: i64,
    pub consume_hi: i64,
    pub victims: usize,
    /// Number of adjacent locations victims may occupy and move between.
    pub victim_zone: usize,
    /// How long a received hazard warning keeps a location off-limits.
    pub avoid_duration: f64,
    /// How long a hazard beacon remains receivable.
    pub beacon_ttl: f64,
    pub uav_sojourn_mean: f64,
    pub victim_sojourn_mean: f64,
    pub horizon_time: f64,
    /// Number of buildings the UAVs actually search (the rest of the city
    /// exists but is off-route), counted as a ring segment centered on the
    /// victim zone. `None` searches everything.
    pub search_area: Option<usize>,
}

impl CitySpec {
    /// Desk-scale default: 20 buildings, 50 victims.
    pub fn desk(seed: u64) -> Self {
        CitySpec {
            buildings: 20,
            seed,
            extra_roads: 3,
            hazard_zone: 0.25,
            hazard_prob: 0.14,
            crash_given_hazard: 0.4,
            battery_capacity: 22,
            consume_lo: 1,
            consume_hi: 2,
            victims: 50,
            victim_zone: 5,
            avoid_duration: 30.0,
            beacon_ttl: 8.0,
            uav_sojourn_mean: 1.0,
            victim_sojourn_mean: 2.5,
            horizon_time: 40.0,
            search_area: None,
        }
    }

    pub fn with_buildings(mut self, buildings: usize) -> Self {
        self.buildings = buildings;
        self.extra_roads = buildings / 6;
        self
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CityError {
    #[error("city needs at least 4 buildings, got {0}")]
    TooSmall(usize),
    #[error("no location lies at hop distance {0} from the victim zone")]
    ImpossibleDistance(u32),
    #[error("victim zone of {zone} exceeds {buildings} buildings")]
    ZoneTooLarge { zone: usize, buildings: usize },
    #[error("search area of {area} cannot cover the victim zone of {zone}")]
    AreaTooSmall { area: usize, zone: usize },
    #[error("need at least one UAV and one victim")]
    Empty,
}

struct City {
    n: usize,
    adj: Vec<Vec<usize>>,
    dist: Vec<u32>,
    hazards: Vec<bool>,
    stations: Vec<bool>,
    support: Vec<usize>,
    searchable: Vec<bool>,
}

fn build_city(spec: &CitySpec, n_stations: usize) -> Result<City, CityError> {
    let n = spec.buildings;
    if n < 4 {
        return Err(CityError::TooSmall(n));
    }
    if spec.victim_zone > n {
        return Err(CityError::ZoneTooLarge { zone: spec.victim_zone, buildings: n });
    }
    // Independent substreams per concern, so changing one knob (say the
    // station count) never reshuffles the others' draws.
    let mut road_rng = CounterRng::from_parts(spec.seed, &[0x0C17, 1]);
    let mut hazard_rng = CounterRng::from_parts(spec.seed, &[0x0C17, 2]);
    let mut station_rng = CounterRng::from_parts(spec.seed, &[0x0C17, 3]);
    let mut support_rng = CounterRng::from_parts(spec.seed, &[0x0C17, 4]);

    let mut adj = vec![Vec::new(); n];
    let connect = |adj: &mut Vec<Vec<usize>>, a: usize, b: usize| {
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    };
    for i in 0..n {
        connect(&mut adj, i, (i + 1) % n);
    }
    for _ in 0..spec.extra_roads {
        let a = road_rng.next_index(n);
        let b = road_rng.next_index(n);
        connect(&mut adj, a, b);
    }
    for neighbors in &mut adj {
        neighbors.sort_unstable();
    }

    // All-pairs hop distances by BFS from every node.
    let mut dist = vec![u32::MAX; n * n];
    for start in 0..n {
        dist[start * n + start] = 0;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[start * n + v] == u32::MAX {
                    dist[start * n + v] = dist[start * n + u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }

    let mut hazards = vec![false; n];
    let hazard_count = ((n as f64 * spec.hazard_zone).round() as usize).min(n);
    let mut picked = 0;
    while picked < hazard_count {
        let c = hazard_rng.next_index(n);
        if !hazards[c] {
            hazards[c] = true;
            picked += 1;
        }
    }

    let start = support_rng.next_index(n);
    let support: Vec<usize> = (0..spec.victim_zone).map(|i| (start + i) % n).collect();

    // Searchable area: a ring segment centered on the victim zone; the rest
    // of the city exists but is off the search routes.
    let area = spec.search_area.unwrap_or(n).min(n);
    if area < spec.victim_zone {
        return Err(CityError::AreaTooSmall { area, zone: spec.victim_zone });
    }
    let mut searchable = vec![false; n];
    let margin = (area - spec.victim_zone) / 2;
    let area_start = (start + n - margin) % n;
    for i in 0..area {
        searchable[(area_start + i) % n] = true;
    }

    // Stations are drawn from a shuffled pool of the twelve locations
    // nearest the victim zone (ring distance). The pool sits inside every
    // sensible search area and a larger count strictly extends a smaller
    // one, so neither shrinking the area nor adding stations reshuffles the
    // ones already deployed.
    let center = (start + spec.victim_zone / 2) % n;
    let ring_dist = |a: usize, b: usize| {
        let d = (a + n - b) % n;
        d.min(n - d)
    };
    let mut pool: Vec<usize> = (0..n).collect();
    pool.sort_by_key(|&c| (ring_dist(c, center), c));
    pool.truncate(12.min(n));
    for i in (1..pool.len()).rev() {
        pool.swap(i, station_rng.next_index(i + 1));
    }
    let mut stations = vec![false; n];
    for &c in pool.iter().take(n_stations.min(pool.len())) {
        stations[c] = true;
    }

    Ok(City { n, adj, dist, hazards, stations, support, searchable })
}

/// Generates the UAV/victim model and its deployment.
pub fn gen_city(
    spec: &CitySpec,
    n_uavs: u32,
    n_stations: usize,
    protocol: Protocol,
    uav_victim_distance: Option<u32>,
) -> Result<(ModelDocument, Deployment), CityError> {
    if n_uavs == 0 || spec.victims == 0 {
        return Err(CityError::Empty);
    }
    let city = build_city(spec, n_stations)?;
    let n = city.n;

    // UAV staging node, optionally at an exact hop distance from the
    // nearest possible victim position.
    let dist_to_support = |loc: usize| -> u32 {
        city.support.iter().map(|&s| city.dist[loc * n + s]).min().unwrap_or(u32::MAX)
    };
    let staging = match uav_victim_distance {
        Some(d) => {
            let candidates: Vec<usize> = (0..n)
                .filter(|&l| city.searchable[l] && dist_to_support(l) == d)
                .collect();
            if candidates.is_empty() {
                return Err(CityError::ImpossibleDistance(d));
            }
            let mut rng = CounterRng::from_parts(spec.seed, &[0x57A6]);
            candidates[rng.next_index(candidates.len())]
        }
        None => {
            // A fixed offset past the victim zone's edge: inside every
            // search area, identical across sweeps of other knobs.
            let margin = (spec.search_area.unwrap_or(n).min(n) - spec.victim_zone) / 2;
            let offset = margin.clamp(1, 4);
            let mut loc = (city.support[spec.victim_zone - 1] + offset) % n;
            while dist_to_support(loc) == 0 {
                loc = (loc + 1) % n;
            }
            loc
        }
    };

    let loc = |i: usize| format!("L{i}");
    let vloc = |i: usize| format!("V{}", city.support[i]);
    let uav_rate = 1.0 / spec.uav_sojourn_mean;
    let victim_rate = 1.0 / spec.victim_sojourn_mean;
    let saved_goal = spec.victims.div_ceil(2);

    let mut m = String::new();
    let _ = writeln!(m, "// Search and rescue over {n} connected locations ({}).", protocol.name());
    let _ = writeln!(m, "const BATCAP = {};", spec.battery_capacity);
    let _ = writeln!(m, "globals {{");
    let _ = writeln!(m, "  CrashNum = 0;");
    let _ = writeln!(m, "  OutofBatteryNum = 0;");
    let _ = writeln!(m, "  SavedVictimNum = 0;");
    let _ = writeln!(m, "  hazard_loc = -1;");
    let _ = writeln!(m, "  hazard_time = -1.0;");
    if protocol == Protocol::Zigbee {
        let _ = writeln!(m, "  relay_loc = -1;");
        let _ = writeln!(m, "  relay_time = -1.0;");
    }
    let _ = writeln!(m, "  uav_at = [{}];", vec!["0"; n].join(", "));
    let _ = writeln!(
        m,
        "  is_station = [{}];",
        city.stations.iter().map(|s| if *s { "1" } else { "0" }).collect::<Vec<_>>().join(", ")
    );
    let _ = writeln!(
        m,
        "  dist = [{}];",
        city.dist.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
    );
    let _ = writeln!(
        m,
        "  vmap = [{}];",
        city.support.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
    );
    let _ = writeln!(m, "}}");
    let _ = writeln!(m);

    // UAV class. Spatial state index i is location i.
    let _ = writeln!(m, "agentclass Uav {{");
    let _ = writeln!(m, "  locals {{");
    let _ = writeln!(m, "    battery = {};", spec.battery_capacity);
    let _ = writeln!(m, "    hit_hazard = 0;");
    let _ = writeln!(m, "    prev_pos = -1;");
    let _ = writeln!(m, "    last_seen = 0.0;");
    let _ = writeln!(m, "    avoid_until = [{}];", vec!["0.0"; n].join(", "));
    let _ = writeln!(m, "  }}");
    let _ = writeln!(m, "  spatial {{");
    for i in 0..n {
        let _ = writeln!(m, "    state {} delay exp({uav_rate})", loc(i));
    }
    for a in (0..n).filter(|a| city.searchable[*a]) {
        // Hovering in place is always possible while powered; it also keeps
        // a fully avoided neighborhood from deadlocking the UAV.
        let _ = writeln!(
            m,
            "    on {s} -> {s} guard battery > 0 do {{ battery = battery - {}; }}",
            spec.consume_lo,
            s = loc(a),
        );
        for &b in city.adj[a].iter().filter(|b| city.searchable[**b]) {
            let guard = format!("battery > 0 && avoid_until[{b}] <= now()");
            let hazard = city.hazards[b];
            let p_hazard = if hazard { spec.hazard_prob } else { 0.0 };
            let p_crash = p_hazard * spec.crash_given_hazard;
            let p_miss = p_hazard - p_crash;
            let p_clear = 1.0 - p_hazard;
            let (s, t) = (loc(a), loc(b));
            for (p, consume) in [(p_clear / 2.0, spec.consume_lo), (p_clear / 2.0, spec.consume_hi)]
            {
                if p > 0.0 {
                    let _ = writeln!(
                        m,
                        "    on {s} -> {t} guard {guard} prob {p} do {{ battery = battery - {consume}; }}",
                    );
                }
            }
            if p_crash > 0.0 {
                let _ = writeln!(
                    m,
                    "    on {s} -> {t} guard {guard} prob {p_crash} do {{ hit_hazard = 1; }}",
                );
            }
            if p_miss > 0.0 {
                let _ = writeln!(
                    m,
                    "    on {s} -> {t} guard {guard} prob {p_miss} do {{ hazard_loc = self_pos(); hazard_time = now(); battery = battery - {}; }}",
                    spec.consume_hi,
                );
            }
        }
    }
    let _ = writeln!(m, "  }}");

    // Interaction: receive a hazard beacon and remember to avoid the spot.
    let receive = format!(
        "avoid_until[hazard_loc] = now() + {}; last_seen = now();",
        crate::script::pretty_real(spec.avoid_duration)
    );
    let _ = writeln!(m, "  interaction {{");
    match protocol {
        Protocol::Bluetooth => {
            let _ = writeln!(m, "    entry BT0 exit BT2");
            let _ = writeln!(m, "    state BT0 delay det(0)");
            let _ = writeln!(m, "    state BT1 delay det(0)");
            let _ = writeln!(m, "    state BT2 delay det(0)");
            let _ = writeln!(m, "    on BT0 -> BT1 do {{ {receive} }}");
            let _ = writeln!(m, "    on BT1 -> BT2");
        }
        Protocol::Zigbee => {
            let _ = writeln!(m, "    entry ZB0 exit ZB3");
            let _ = writeln!(m, "    state ZB0 delay det(0)");
            let _ = writeln!(m, "    state ZB1 delay det(0)");
            let _ = writeln!(m, "    state ZB2 delay det(0)");
            let _ = writeln!(m, "    state ZB3 delay det(0)");
            let _ = writeln!(m, "    on ZB0 -> ZB1 do {{ {receive} }}");
            // The relay carries the original hazard timestamp, so it extends
            // reach without re-arming the beacon's lifetime, and a receiver
            // whose watermark already covers the hazard ignores it.
            let _ = writeln!(
                m,
                "    on ZB1 -> ZB2 do {{ relay_loc = self_pos(); relay_time = hazard_time; }}"
            );
            let _ = writeln!(m, "    on ZB2 -> ZB3");
        }
    }
    let _ = writeln!(m, "  }}");

    let _ = writeln!(m, "  predicates {{");
    let _ = writeln!(
        m,
        "    failure Crashed when hit_hazard == 1 do {{ if (prev_pos >= 0) {{ uav_at[prev_pos] = uav_at[prev_pos] - 1; }} hazard_loc = self_pos(); hazard_time = now(); CrashNum = CrashNum + 1; }}"
    );
    let _ = writeln!(
        m,
        "    failure OutofBattery when battery <= 0 && hit_hazard == 0 do {{ if (prev_pos >= 0) {{ uav_at[prev_pos] = uav_at[prev_pos] - 1; }} OutofBatteryNum = OutofBatteryNum + 1; }}"
    );
    let _ = writeln!(m, "  }}");

    let ttl = crate::script::pretty_real(spec.beacon_ttl);
    let range = protocol.range();
    let check = match protocol {
        Protocol::Bluetooth => format!(
            "hazard_time > last_seen && now() - hazard_time <= {ttl} && dist[self_pos() * {n} + hazard_loc] <= {range}"
        ),
        Protocol::Zigbee => format!(
            "(hazard_time > last_seen && now() - hazard_time <= {ttl} && dist[self_pos() * {n} + hazard_loc] <= {range}) || (relay_time > last_seen && now() - relay_time <= {ttl} && dist[self_pos() * {n} + relay_loc] <= {range})"
        ),
    };
    let _ = writeln!(m, "  hooks {{");
    let _ = writeln!(
        m,
        "    on_move {{ if (is_station[self_pos()] == 1) {{ battery = BATCAP; }} if (prev_pos >= 0) {{ uav_at[prev_pos] = uav_at[prev_pos] - 1; }} uav_at[self_pos()] = uav_at[self_pos()] + 1; prev_pos = self_pos(); }}"
    );
    let _ = writeln!(m, "    check_interaction {check}");
    let _ = writeln!(m, "  }}");
    let _ = writeln!(m, "}}");
    let _ = writeln!(m);

    // Victim class: a slow walk over the support zone; saved on meeting a
    // live UAV. Victim spatial index v maps to location vmap[v].
    let _ = writeln!(m, "agentclass Victim {{");
    let _ = writeln!(m, "  spatial {{");
    for v in 0..city.support.len() {
        let _ = writeln!(m, "    state {} delay exp({victim_rate})", vloc(v));
    }
    for v in 0..city.support.len() {
        // Staying put and every adjacent support location are equally
        // likely; they share one unguarded group, so split the probability.
        let targets: Vec<usize> = std::iter::once(v)
            .chain((0..city.support.len()).filter(|&u| {
                u != v && city.adj[city.support[v]].contains(&city.support[u])
            }))
            .collect();
        let p = 1.0 / targets.len() as f64;
        for u in targets {
            let _ = writeln!(m, "    on {} -> {} prob {p}", vloc(v), vloc(u));
        }
    }
    let _ = writeln!(m, "  }}");
    let _ = writeln!(m, "  predicates {{");
    let _ = writeln!(
        m,
        "    success Saved when uav_at[vmap[self_pos()]] > 0 do {{ SavedVictimNum = SavedVictimNum + 1; }}"
    );
    let _ = writeln!(m, "  }}");
    let _ = writeln!(m, "}}");

    let doc = parse_model(&m).expect("generated city model must parse");

    let mut d = String::new();
    let _ = writeln!(d, "horizon_time = {}", spec.horizon_time);
    let _ = writeln!(
        d,
        "property = \"F (CrashNum <= 1 && OutofBatteryNum <= 1 && SavedVictimNum >= {saved_goal})\""
    );
    let _ = writeln!(d);
    let _ = writeln!(d, "[[instances]]");
    let _ = writeln!(d, "class = \"Uav\"");
    let _ = writeln!(d, "count = {n_uavs}");
    let _ = writeln!(d, "initial = \"{}\"", loc(staging));
    let _ = writeln!(d);
    let _ = writeln!(d, "[[instances]]");
    let _ = writeln!(d, "class = \"Victim\"");
    let _ = writeln!(d, "count = {}", spec.victims);
    let _ = writeln!(d, "[instances.initial_dist]");
    let weight = 1.0 / city.support.len() as f64;
    for v in 0..city.support.len() {
        let _ = writeln!(d, "{} = {weight}", vloc(v));
    }
    let deployment = parse_deployment(&d).expect("generated city deployment must parse");

    Ok((doc, deployment))
}
