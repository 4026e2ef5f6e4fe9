//! Bundled example processes with their pattern applications and grids.
//!
//! Counts the process descriptions leave open are pinned here: a FIFO queue
//! of three slots, two warehouse employees, two couriers, one van loaded in
//! batches of two and two depots for package delivery; three call agents and
//! one manager approving in batches of up to two for energy contracts; three
//! operators and unit stage capacities for the assembly line.

use std::collections::BTreeMap;

use serde_json::json;
use thiserror::Error;

use crate::dataset::{ApplicationSet, ConfigEntry, GridSpec, RecordingSet};
use crate::net::{Marking, Net, NetBuilder, RoleHint};
use crate::patterns::{PatternApplication, PatternCode};
use crate::sim::{ArrivalStream, DelayRule, Dist, SimConfig};

pub const FIXTURE_NAMES: [&str; 3] = ["package_delivery", "energy_contract", "assembly"];

/// Master seed of the package delivery grid. Chosen so that every cell shows
/// its pattern at least once.
pub const PACKAGE_SEED: u64 = 1592;
/// Master seed of the energy contract grid.
pub const ENERGY_SEED: u64 = 2024;
pub const ASSEMBLY_SEED: u64 = 7;

pub const ENERGY_CONTRACTS: u64 = 2200;
pub const ENERGY_DEVIATION_WEIGHT: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum FixtureError {
    #[error("unknown fixture {0} (known: package_delivery, energy_contract, assembly)")]
    UnknownFixture(String),
}

pub fn fixture(name: &str) -> Result<(Net, GridSpec), FixtureError> {
    match name {
        "package_delivery" => Ok((package_delivery(), package_grid())),
        "energy_contract" => Ok((energy_contract(), energy_grid())),
        "assembly" => Ok((assembly(), assembly_grid())),
        other => Err(FixtureError::UnknownFixture(other.to_string())),
    }
}

const PKG: &str = "package";
const QUEUE: &str = "queue";
const WE: &str = "warehouse_employee";
const VAN: &str = "van";
const COURIER: &str = "courier";
const DEPOT: &str = "depot";

pub fn package_delivery() -> Net {
    use RoleHint::*;
    let mut b = NetBuilder::new("package_delivery");
    for ty in [PKG, QUEUE, WE, VAN, COURIER, DEPOT] {
        b = b.object_type(ty);
    }
    b = b
        .place("p_new", &[PKG], Regular)
        .place("p_home", &[PKG], Regular)
        .place("p_depot", &[PKG], Regular)
        .place("p_q3", &[PKG, QUEUE], Queue)
        .place("p_q2", &[PKG, QUEUE], Queue)
        .place("p_q1", &[PKG, QUEUE], Queue)
        .place("p_q3_free", &[QUEUE], Other)
        .place("p_q2_free", &[QUEUE], Other)
        .place("p_q1_free", &[QUEUE], Other)
        .place("p_we", &[WE], ResourceIdle)
        .place("p_picked", &[PKG, WE], Correlation)
        .place("p_van_empty", &[VAN], Other)
        .place("p_van_half", &[VAN], Other)
        .place("p_van_full", &[VAN], Other)
        .place("p_loaded", &[PKG, VAN], Correlation)
        .place("p_c", &[COURIER], ResourceIdle)
        .place("p_c_login", &[COURIER], Other)
        .place("p_driving", &[VAN, COURIER], Correlation)
        .place("p_unloaded", &[VAN], Other)
        .place("p_rung", &[PKG, COURIER], Correlation)
        .place("p_delivered", &[PKG], Regular)
        .place("p_depots", &[DEPOT], Other)
        .place("p_registered", &[PKG, COURIER], Correlation)
        .place("p_depot_mem", &[PKG, DEPOT], Correlation)
        .place("p_at_depot", &[PKG, DEPOT], Correlation)
        .place("p_collected", &[PKG], Regular);

    b = b.silent("arrive").arc("arrive", "p_new", &["!p:package"]);
    for (id, label, mode) in [("order_home", "order home", "p_home"), ("order_depot", "order depot", "p_depot")] {
        b = b
            .transition(id, Some(label), &["p"])
            .arc("p_new", id, &["p:package"])
            .arc("p_q3_free", id, &["q:queue"])
            .arc(id, "p_q3", &["p:package", "q:queue"])
            .arc(id, mode, &["p:package"]);
    }
    for (id, from, to) in [("advance_3", "p_q3", "p_q2"), ("advance_2", "p_q2", "p_q1")] {
        let (from_free, to_free) = (format!("{from}_free"), format!("{to}_free"));
        b = b
            .silent(id)
            .arc(from, id, &["p:package", "q:queue"])
            .arc(&to_free, id, &["r:queue"])
            .arc(id, to, &["p:package", "r:queue"])
            .arc(id, &from_free, &["q:queue"]);
    }
    b = b
        .transition("pick", Some("pick package"), &["p", "w"])
        .arc("p_q1", "pick", &["p:package", "q:queue"])
        .arc("p_we", "pick", &["w:warehouse_employee"])
        .arc("pick", "p_q1_free", &["q:queue"])
        .arc("pick", "p_picked", &["p:package", "w:warehouse_employee"]);
    for (id, from, to) in [("load_first", "p_van_empty", "p_van_half"), ("load_second", "p_van_half", "p_van_full")] {
        b = b
            .transition(id, Some("load package"), &["p", "w", "v"])
            .arc("p_picked", id, &["p:package", "w:warehouse_employee"])
            .arc(from, id, &["v:van"])
            .arc(id, "p_we", &["w:warehouse_employee"])
            .arc(id, "p_loaded", &["p:package", "v:van"])
            .arc(id, to, &["v:van"]);
    }
    b = b
        .transition("drive_off", Some("drive off"), &["v", "c"])
        .arc("p_van_full", "drive_off", &["v:van"])
        .arc("p_c", "drive_off", &["c:courier"])
        .arc("drive_off", "p_driving", &["v:van", "c:courier"])
        .transition("ring", Some("ring"), &["p", "c"])
        .arc("p_driving", "ring", &["v:van", "c:courier"])
        .arc("p_loaded", "ring", &["p:package", "v:van"])
        .arc("p_home", "ring", &["p:package"])
        .arc("ring", "p_driving", &["v:van", "c:courier"])
        .arc("ring", "p_rung", &["p:package", "c:courier"])
        .arc("ring", "p_unloaded", &["v:van"])
        .transition("deliver_home", Some("deliver home"), &["p", "c"])
        .arc("p_rung", "deliver_home", &["p:package", "c:courier"])
        .arc("deliver_home", "p_delivered", &["p:package"])
        .transition("register_after_ring", Some("register depot"), &["p", "c", "d"])
        .arc("p_rung", "register_after_ring", &["p:package", "c:courier"])
        .arc("p_depots", "register_after_ring", &["d:depot"])
        .arc("register_after_ring", "p_depots", &["d:depot"])
        .arc("register_after_ring", "p_registered", &["p:package", "c:courier"])
        .arc("register_after_ring", "p_depot_mem", &["p:package", "d:depot"])
        .transition("register_depot", Some("register depot"), &["p", "c", "d"])
        .arc("p_driving", "register_depot", &["v:van", "c:courier"])
        .arc("p_loaded", "register_depot", &["p:package", "v:van"])
        .arc("p_depot", "register_depot", &["p:package"])
        .arc("p_depots", "register_depot", &["d:depot"])
        .arc("register_depot", "p_driving", &["v:van", "c:courier"])
        .arc("register_depot", "p_unloaded", &["v:van"])
        .arc("register_depot", "p_depots", &["d:depot"])
        .arc("register_depot", "p_registered", &["p:package", "c:courier"])
        .arc("register_depot", "p_depot_mem", &["p:package", "d:depot"])
        .transition("deliver_depot", Some("deliver depot"), &["p", "c", "d"])
        .arc("p_registered", "deliver_depot", &["p:package", "c:courier"])
        .arc("p_depot_mem", "deliver_depot", &["p:package", "d:depot"])
        .arc("deliver_depot", "p_at_depot", &["p:package", "d:depot"])
        .transition("collect", Some("collect"), &["p", "d"])
        .arc("p_at_depot", "collect", &["p:package", "d:depot"])
        .arc("collect", "p_collected", &["p:package"])
        .transition("return_van", Some("return van"), &["v", "c"])
        .arc("p_driving", "return_van", &["v:van", "c:courier"])
        .arc("p_unloaded", "return_van", &["v:van"])
        .arc("p_unloaded", "return_van", &["v:van"])
        .arc("return_van", "p_van_empty", &["v:van"])
        .arc("return_van", "p_c", &["c:courier"]);

    b.tokens("p_q3_free", &[&["q3"]])
        .tokens("p_q2_free", &[&["q2"]])
        .tokens("p_q1_free", &[&["q1"]])
        .tokens("p_we", &[&["we1"], &["we2"]])
        .tokens("p_van_empty", &[&["v1"]])
        .tokens("p_c", &[&["c1"], &["c2"]])
        .tokens("p_c_login", &[&["c1"], &["c2"]])
        .tokens("p_depots", &[&["d1"], &["d2"]])
        .build()
}

fn app(id: &str, code: PatternCode, mapping: &[(&str, &str)]) -> PatternApplication {
    PatternApplication::new(id, code, mapping)
}

/// The six behavioral deviations of the package process.
pub fn package_behavioral() -> Vec<PatternApplication> {
    use PatternCode::*;
    vec![
        app("bi5_overtake_queue", Overtaking, &[("p_q1", "p_q1"), ("p_q2", "p_q2")]),
        app("bi7_courier_as_employee", SwitchRoles, &[("p_r1", "p_c"), ("p_r2", "p_we")]),
        app("bi10_leave_half_loaded", IgnoreBatching, &[("p_from", "p_van_half"), ("p_to", "p_van_full")]),
        app("bi3_skip_ring", SkipActivity, &[("t", "ring")]),
        app("bi9_other_depot", ResourceMemory, &[("p_m", "p_depot_mem"), ("p_r", "p_depots")]),
        app("bi2_courier_multitask", Multitasking, &[("p1", "p_rung"), ("p2", "p_c")]),
    ]
}

/// The six recording errors of the package process.
pub fn package_recording() -> Vec<PatternApplication> {
    use PatternCode::*;
    vec![
        app("ri_in_e_1", IncorrectEvent, &[("t1", "order_home"), ("t2", "order_depot")]),
        app("ri_in_e_2", IncorrectEvent, &[("t1", "order_depot"), ("t2", "order_home")]),
        app("ri_mi_e_load", MissingEvent, &[("t", "load_first")]),
        app("ri_mi_o_van", MissingObject, &[("t", "load_first")]).with_set("objects", &["v"]),
        app("ri_in_o_ring", IncorrectObject, &[("t", "ring"), ("var", "c"), ("p_w", "p_c_login")]),
        app("ri_mi_p_depot", MissingPosition, &[]).with_set("transitions", &["deliver_depot", "collect"]),
    ]
}

fn normal(mean: f64, sd: f64) -> Dist {
    Dist::Normal { mean, variance: sd * sd }
}

fn delay(transition: &str, dist: Dist) -> DelayRule {
    DelayRule { transition: transition.to_string(), place: None, delay: dist }
}

pub fn package_config() -> SimConfig {
    let mut c = SimConfig::new(PACKAGE_SEED);
    c.deviation_weight = Some(1.0);
    c.arrivals.push(ArrivalStream {
        transition: "arrive".into(),
        start: 0.0,
        inter_arrival: Dist::Constant { value: 0.0 },
        count: 2,
    });
    c.delays = vec![
        delay("pick", normal(900.0, 360.0)),
        delay("load_first", Dist::Constant { value: 120.0 }),
        delay("load_second", Dist::Constant { value: 120.0 }),
        delay("drive_off", normal(1800.0, 300.0)),
        delay("ring", Dist::Constant { value: 60.0 }),
        delay("deliver_home", Dist::Constant { value: 120.0 }),
        delay("register_after_ring", Dist::Constant { value: 300.0 }),
        delay("register_depot", Dist::Constant { value: 300.0 }),
        delay("deliver_depot", normal(1200.0, 300.0)),
        delay("return_van", Dist::Constant { value: 1800.0 }),
    ];
    c.deviation_delay = Some(Dist::Uniform { low: 300.0, high: 1800.0 });
    c.idle_weight = Some(1.0);
    c.firing_limit = Some(400);
    c.time_horizon = Some(7.0 * 86_400.0);
    c
}

/// Six behavioral singletons and six recording singletons, each in its own
/// cell: twelve cells in total.
pub fn package_grid() -> GridSpec {
    let behavioral = package_behavioral();
    let mut behavioral_sets = vec![ApplicationSet { id: "none".into(), applications: vec![] }];
    behavioral_sets.extend(behavioral.iter().map(|a| ApplicationSet { id: a.application_id.clone(), applications: vec![a.clone()] }));
    let mut recording_sets = vec![RecordingSet {
        id: "none".into(),
        applications: vec![],
        applies_to: Some(behavioral.iter().map(|a| a.application_id.clone()).collect()),
    }];
    recording_sets.extend(package_recording().into_iter().map(|a| RecordingSet {
        id: a.application_id.clone(),
        applications: vec![a],
        applies_to: Some(vec!["none".into()]),
    }));
    GridSpec {
        master_seed: PACKAGE_SEED,
        behavioral_sets,
        recording_sets,
        sim_configs: vec![ConfigEntry { id: "base".into(), config: package_config() }],
    }
}

const APPL: &str = "application";
const AGENT: &str = "agent";
const MANAGER: &str = "manager";

pub fn energy_contract() -> Net {
    use RoleHint::*;
    let ag = |b: NetBuilder, from: &str, t: &str| b.arc(from, t, &["a:application", "g:agent"]);
    let to = |b: NetBuilder, t: &str, place: &str| b.arc(t, place, &["a:application", "g:agent"]);
    let mut b = NetBuilder::new("energy_contract").object_type(APPL).object_type(AGENT).object_type(MANAGER);
    b = b
        .place("p_received", &[APPL], Regular)
        .place("p_agent", &[AGENT], ResourceIdle)
        .place("p_login", &[AGENT], Other);
    for p in [
        "p_cust", "p_meter", "p_canc", "p_cust_done", "p_meter_done", "p_canc_done", "p_postponed", "p_cancel_mem",
        "p_reopened", "p_reclosing",
    ] {
        b = b.place(p, &[APPL, AGENT], Correlation);
    }
    b = b
        .place("p_to_approve", &[APPL], Regular)
        .place("p_later", &[APPL], Regular)
        .place("p_cancelled", &[APPL], Regular)
        .place("p_approved", &[APPL], Regular)
        .place("p_manager", &[MANAGER], ResourceIdle)
        .place("p_batch", &[APPL, MANAGER], Correlation);
    for p in ["p_mgr_half", "p_mgr_full", "p_sign1", "p_sign2"] {
        b = b.place(p, &[MANAGER], Other);
    }

    b = b
        .transition("receive", Some("receive application"), &["a"])
        .arc("receive", "p_received", &["!a:application"])
        .transition("open_file", Some("open file"), &["a", "g"])
        .arc("p_received", "open_file", &["a:application"])
        .arc("p_agent", "open_file", &["g:agent"]);
    for p in ["p_cust", "p_meter", "p_canc"] {
        b = to(b, "open_file", p);
    }
    for (id, label, from, dest) in [
        ("add_customer", Some("add customer details"), "p_cust", "p_cust_done"),
        ("add_meter", Some("add meter details"), "p_meter", "p_meter_done"),
        ("cancel_phase1", Some("cancel previous contract"), "p_canc", "p_canc_done"),
        ("postpone", None, "p_canc", "p_postponed"),
        ("cancel_phase2", Some("cancel previous contract"), "p_reopened", "p_reclosing"),
    ] {
        b = match label {
            Some(l) => b.transition(id, Some(l), &["a", "g"]),
            None => b.silent(id),
        };
        b = ag(b, from, id);
        b = to(b, id, dest);
    }
    b = b.transition("close_file", Some("close file"), &["a", "g"]);
    for p in ["p_cust_done", "p_meter_done", "p_canc_done"] {
        b = ag(b, p, "close_file");
    }
    b = b.arc("close_file", "p_agent", &["g:agent"]).arc("close_file", "p_to_approve", &["a:application"]);
    b = b.transition("close_file_postponed", Some("close file"), &["a", "g"]);
    for p in ["p_cust_done", "p_meter_done", "p_postponed"] {
        b = ag(b, p, "close_file_postponed");
    }
    b = b
        .arc("close_file_postponed", "p_agent", &["g:agent"])
        .arc("close_file_postponed", "p_to_approve", &["a:application"])
        .arc("close_file_postponed", "p_later", &["a:application"]);
    b = to(b, "close_file_postponed", "p_cancel_mem");
    b = b
        .transition("reopen_file", Some("reopen file"), &["a", "g"])
        .arc("p_later", "reopen_file", &["a:application"])
        .arc("p_agent", "reopen_file", &["g:agent"]);
    b = ag(b, "p_cancel_mem", "reopen_file");
    b = to(b, "reopen_file", "p_reopened");
    b = b.transition("close_reopened", Some("close file"), &["a", "g"]);
    b = ag(b, "p_reclosing", "close_reopened");
    b = b.arc("close_reopened", "p_agent", &["g:agent"]).arc("close_reopened", "p_cancelled", &["a:application"]);

    b = b
        .silent("collect_first")
        .arc("p_to_approve", "collect_first", &["a:application"])
        .arc("p_manager", "collect_first", &["m:manager"])
        .arc("collect_first", "p_batch", &["a:application", "m:manager"])
        .arc("collect_first", "p_mgr_half", &["m:manager"])
        .silent("collect_second")
        .arc("p_to_approve", "collect_second", &["a:application"])
        .arc("p_mgr_half", "collect_second", &["m:manager"])
        .arc("collect_second", "p_batch", &["a:application", "m:manager"])
        .arc("collect_second", "p_mgr_full", &["m:manager"]);
    for (id, from, dest) in [("start_signing_half", "p_mgr_half", "p_sign1"), ("start_signing_full", "p_mgr_full", "p_sign2")] {
        b = b.transition(id, Some("start signing"), &["m"]).arc(from, id, &["m:manager"]).arc(id, dest, &["m:manager"]);
    }
    for (id, from, dest) in [("approve_first", "p_sign2", "p_sign1"), ("approve_last", "p_sign1", "p_manager")] {
        b = b
            .transition(id, Some("approve contract"), &["a", "m"])
            .arc("p_batch", id, &["a:application", "m:manager"])
            .arc(from, id, &["m:manager"])
            .arc(id, dest, &["m:manager"])
            .arc(id, "p_approved", &["a:application"]);
    }
    b.tokens("p_agent", &[&["agent_a"], &["agent_b"], &["agent_c"]])
        .tokens("p_login", &[&["agent_a"], &["agent_b"], &["agent_c"]])
        .tokens("p_manager", &[&["manager_m"]])
        .build()
}

pub fn energy_behavioral() -> Vec<PatternApplication> {
    use PatternCode::*;
    vec![
        app("bi7_agent_as_manager", SwitchRoles, &[("p_r1", "p_agent"), ("p_r2", "p_manager")]),
        app("bi9_other_agent_cancels", ResourceMemory, &[("p_m", "p_cancel_mem"), ("p_r", "p_login")]),
        app("bi10_interrupt_batch", IgnoreBatching, &[("p_from", "p_sign1"), ("p_to", "p_mgr_half")]),
        app("bi2_agent_multitask", Multitasking, &[("p1", "p_reopened"), ("p2", "p_agent")]),
        app("bi11_slow_meter", LongDuration, &[("t", "add_meter")])
            .with_param("delay", json!({"dist": "log_normal", "mu": 9.5, "sigma": 0.5})),
    ]
}

pub fn energy_recording() -> Vec<PatternApplication> {
    use PatternCode::*;
    vec![
        app("ri_mi_e_customer", MissingEvent, &[("t", "add_customer")]),
        app("ri_in_o_open", IncorrectObject, &[("t", "open_file"), ("var", "g"), ("p_w", "p_login")]),
        app("ri_in_o_cancel", IncorrectObject, &[("t", "cancel_phase1"), ("var", "g"), ("p_w", "p_login")]),
        app("ri_in_p_approve", IncorrectPosition, &[("t1", "approve_first"), ("t2", "approve_last")]),
    ]
}

pub fn energy_config() -> SimConfig {
    let mut c = SimConfig::new(ENERGY_SEED);
    c.deviation_weight = Some(ENERGY_DEVIATION_WEIGHT);
    c.arrivals.push(ArrivalStream {
        transition: "receive".into(),
        start: 0.0,
        inter_arrival: Dist::Exponential { rate: 1.0 / 600.0 },
        count: ENERGY_CONTRACTS,
    });
    c.delays = vec![
        delay("open_file", Dist::Constant { value: 60.0 }),
        delay("add_customer", normal(600.0, 150.0)),
        delay("add_meter", normal(480.0, 120.0)),
        delay("cancel_phase1", normal(300.0, 60.0)),
        delay("close_file", Dist::Constant { value: 60.0 }),
        delay("close_file_postponed", Dist::Constant { value: 60.0 }),
        DelayRule {
            transition: "close_file_postponed".into(),
            place: Some("p_later".into()),
            delay: Dist::Uniform { low: 3600.0, high: 14_400.0 },
        },
        delay("cancel_phase2", normal(300.0, 60.0)),
        delay("close_reopened", Dist::Constant { value: 60.0 }),
        delay("start_signing_half", Dist::Constant { value: 60.0 }),
        delay("start_signing_full", Dist::Constant { value: 60.0 }),
        delay("approve_first", normal(240.0, 60.0)),
        delay("approve_last", normal(240.0, 60.0)),
    ];
    c.deviation_delay = Some(Dist::Uniform { low: 300.0, high: 1800.0 });
    c.idle_weight = Some(1.0);
    c.time_horizon = Some(60.0 * 86_400.0);
    c
}

/// All behavioral deviations in one M^S and all recording errors in one
/// M^L: a single cell.
pub fn energy_grid() -> GridSpec {
    GridSpec {
        master_seed: ENERGY_SEED,
        behavioral_sets: vec![ApplicationSet { id: "energy_bi".into(), applications: energy_behavioral() }],
        recording_sets: vec![RecordingSet { id: "energy_ri".into(), applications: energy_recording(), applies_to: None }],
        sim_configs: vec![ConfigEntry { id: "low_frequency".into(), config: energy_config() }],
    }
}

const PRODUCT: &str = "product";
const STAGE: &str = "stage";
/// Stages with the operator role responsible for them.
pub const ASSEMBLY_STAGES: [(&str, &str); 7] = [
    ("A", "operator_ag"),
    ("B", "operator_bf"),
    ("C", "operator_cde"),
    ("D", "operator_cde"),
    ("E", "operator_cde"),
    ("F", "operator_bf"),
    ("G", "operator_ag"),
];

pub fn assembly() -> Net {
    use RoleHint::*;
    let mut b = NetBuilder::new("assembly").object_type(PRODUCT).object_type(STAGE);
    for op in ["operator_ag", "operator_bf", "operator_cde"] {
        b = b.object_type(op).place(&format!("p_{op}"), &[op], ResourceIdle);
    }
    b = b.place("p_login_cde", &["operator_cde"], Other).place("p_done", &[PRODUCT], Regular);
    for (s, op) in ASSEMBLY_STAGES {
        let l = s.to_lowercase();
        b = b
            .place(&format!("p_{l}_in"), &[PRODUCT], Regular)
            .place(&format!("cap_{l}"), &[STAGE], ResourceIdle)
            .place(&format!("p_{l}_mid"), &[PRODUCT, STAGE, op], Correlation)
            .tokens(&format!("cap_{l}"), &[&[&format!("stage_{l}")]]);
    }
    b = b.silent("start_product").arc("start_product", "p_a_in", &["!x:product"]);
    for (i, (s, op)) in ASSEMBLY_STAGES.into_iter().enumerate() {
        let l = s.to_lowercase();
        let (input, mid, cap, idle) = (format!("p_{l}_in"), format!("p_{l}_mid"), format!("cap_{l}"), format!("p_{op}"));
        let next = match ASSEMBLY_STAGES.get(i + 1) {
            Some((n, _)) => format!("p_{}_in", n.to_lowercase()),
            None => "p_done".to_string(),
        };
        let o = format!("o:{op}");
        let (t1, t2) = (format!("{l}_step1"), format!("{l}_step2"));
        b = b
            .transition(&t1, Some(&format!("stage {s} step 1")), &["x", "o"])
            .arc(&input, &t1, &["x:product"])
            .arc(&cap, &t1, &["s:stage"])
            .arc(&idle, &t1, &[&o])
            .arc(&t1, &mid, &["x:product", "s:stage", &o])
            .transition(&t2, Some(&format!("stage {s} step 2")), &["x", "o"])
            .arc(&mid, &t2, &["x:product", "s:stage", &o])
            .arc(&t2, &next, &["x:product"])
            .arc(&t2, &cap, &["s:stage"])
            .arc(&t2, &idle, &[&o]);
        if i > 0 {
            let revert = format!("revert_to_{l}");
            b = b.silent(&revert).weight(0.05).arc(&input, &revert, &["x:product"]);
            let prev = format!("p_{}_in", ASSEMBLY_STAGES[i - 1].0.to_lowercase());
            b = b.arc(&revert, &prev, &["x:product"]);
        }
    }
    b.tokens("p_operator_ag", &[&["op1"]])
        .tokens("p_operator_bf", &[&["op2"]])
        .tokens("p_operator_cde", &[&["op3"]])
        .tokens("p_login_cde", &[&["op3"]])
        .build()
}

pub fn assembly_behavioral() -> Vec<PatternApplication> {
    use PatternCode::*;
    vec![
        app("bi6_stage_e_capacity", Capacity, &[("p_c", "cap_e")]).with_param("variant", json!("increase")),
        app("bi7_op2_helps_op3", SwitchRoles, &[("p_r1", "p_operator_bf"), ("p_r2", "p_operator_cde")]),
        app("bi2_op2_multitask", Multitasking, &[("p1", "p_b_mid"), ("p2", "p_operator_bf")]),
    ]
}

pub fn assembly_recording() -> Vec<PatternApplication> {
    use PatternCode::*;
    vec![
        app("ri_in_o_stage_c", IncorrectObject, &[("t", "c_step1"), ("var", "o"), ("p_w", "p_login_cde")]),
        app("ri_in_p_d_to_e", IncorrectPosition, &[("t1", "d_step2"), ("t2", "e_step1")]),
    ]
}

pub fn assembly_config() -> SimConfig {
    let mut c = SimConfig::new(ASSEMBLY_SEED);
    c.deviation_weight = Some(0.2);
    c.arrivals.push(ArrivalStream {
        transition: "start_product".into(),
        start: 0.0,
        inter_arrival: Dist::Exponential { rate: 1.0 / 1800.0 },
        count: 40,
    });
    for (s, _) in ASSEMBLY_STAGES {
        let l = s.to_lowercase();
        c.delays.push(delay(&format!("{l}_step1"), normal(300.0, 60.0)));
        c.delays.push(delay(&format!("{l}_step2"), normal(300.0, 60.0)));
        if l != "a" {
            c.delays.push(delay(&format!("revert_to_{l}"), Dist::Uniform { low: 600.0, high: 1800.0 }));
        }
    }
    c.deviation_delay = Some(Dist::Uniform { low: 120.0, high: 600.0 });
    c.idle_weight = Some(1.0);
    c.time_horizon = Some(30.0 * 86_400.0);
    c.firing_limit = Some(20_000);
    c
}

pub fn assembly_grid() -> GridSpec {
    GridSpec {
        master_seed: ASSEMBLY_SEED,
        behavioral_sets: vec![ApplicationSet { id: "assembly_bi".into(), applications: assembly_behavioral() }],
        recording_sets: vec![RecordingSet { id: "assembly_ri".into(), applications: assembly_recording(), applies_to: None }],
        sim_configs: vec![ConfigEntry { id: "standard".into(), config: assembly_config() }],
    }
}

/// A small base net with one application, used to brute-force the
/// behavioral superset law.
#[derive(Debug, Clone)]
pub struct AdditivityCase {
    pub name: String,
    pub net: Net,
    pub application: PatternApplication,
}

/// Removes source transitions (arrivals) so the language stays small.
fn without(net: &Net, transition: &str) -> Net {
    let mut n = net.clone();
    n.transitions.retain(|t| t.id != transition);
    n.arcs.retain(|a| a.source != transition && a.target != transition);
    n
}

fn reduced(net: &Net, source: &str, tokens: &[(&str, &[&str])]) -> Net {
    let mut n = without(net, source);
    let mut m = Marking::new();
    for (place, tuple) in tokens {
        m.add(place, tuple.iter().map(|s| s.to_string()).collect(), 1);
    }
    n.initial_marking = m;
    n
}

/// One case per catalog pattern, each on a reduced marking with at most
/// six identifiers.
pub fn additivity_cases() -> Vec<AdditivityCase> {
    use PatternCode::*;
    let pkg = package_delivery();
    let energy = energy_contract();
    let asm = assembly();
    let queue = reduced(&pkg, "arrive", &[("p_q1", &["a", "q1"]), ("p_q2", &["b", "q2"]), ("p_we", &["w1"]), ("p_c", &["c1"])]);
    let ordering = reduced(&pkg, "arrive", &[("p_new", &["a"]), ("p_q3_free", &["q3"])]);
    let loading = reduced(&pkg, "arrive", &[("p_picked", &["a", "w1"]), ("p_picked", &["b", "w1"]), ("p_van_empty", &["v1"]), ("p_we", &["w2"])]);
    let ringing = reduced(
        &pkg,
        "arrive",
        &[("p_driving", &["v1", "c1"]), ("p_loaded", &["a", "v1"]), ("p_home", &["a"]), ("p_c", &["c2"]), ("p_c_login", &["c1"]), ("p_c_login", &["c2"]), ("p_depots", &["d1"])],
    );
    let depot = reduced(
        &pkg,
        "arrive",
        &[("p_driving", &["v1", "c1"]), ("p_loaded", &["a", "v1"]), ("p_depot", &["a"]), ("p_depots", &["d1"]), ("p_depots", &["d2"])],
    );
    let at_depot = reduced(&pkg, "arrive", &[("p_registered", &["a", "c1"]), ("p_depot_mem", &["a", "d1"])]);
    let meter = reduced(&energy, "receive", &[("p_meter", &["a1", "g1"]), ("p_cust", &["a1", "g1"])]);
    let stage_e = reduced(&asm, "start_product", &[("p_e_in", &["x1"]), ("p_e_in", &["x2"]), ("cap_e", &["stage_e"]), ("p_operator_cde", &["op3"])]);
    let stage_d = reduced(
        &asm,
        "start_product",
        &[("p_d_mid", &["x1", "stage_d", "op3"]), ("cap_e", &["stage_e"]), ("p_operator_cde", &["op3"])],
    );

    let case = |name: &str, net: &Net, application: PatternApplication| AdditivityCase {
        name: name.to_string(),
        net: net.clone(),
        application,
    };
    let mut cases = vec![
        case("missing_event", &loading, app("x", MissingEvent, &[("t", "load_first")])),
        case("incorrect_event", &ordering, app("x", IncorrectEvent, &[("t1", "order_home"), ("t2", "order_depot")])),
        case("incorrect_activity", &ordering, app("x", IncorrectActivity, &[("t", "order_home"), ("label", "deliver home")])),
        case("missing_object", &loading, app("x", MissingObject, &[("t", "load_first")]).with_set("objects", &["v"])),
        case("incorrect_object", &ringing, app("x", IncorrectObject, &[("t", "ring"), ("var", "c"), ("p_w", "p_c_login")])),
        case("incorrect_position", &stage_d, app("x", IncorrectPosition, &[("t1", "d_step2"), ("t2", "e_step1")])),
        case("missing_position", &at_depot, app("x", MissingPosition, &[]).with_set("transitions", &["deliver_depot", "collect"])),
        case("change_correlation", &loading, app("x", ChangeCorrelation, &[("p", "p_picked"), ("p_r", "p_we")])),
        case("multitasking", &ringing, app("x", Multitasking, &[("p1", "p_rung"), ("p2", "p_c")])),
        case("skip_activity", &ringing, app("x", SkipActivity, &[("t", "ring")])),
        case("overtaking", &queue, app("x", Overtaking, &[("p_q1", "p_q1"), ("p_q2", "p_q2")])),
        case("capacity_increase", &stage_e, app("x", Capacity, &[("p_c", "cap_e")]).with_param("variant", json!("increase"))),
        case("capacity_decrease", &stage_e, app("x", Capacity, &[("p_c", "cap_e")]).with_param("variant", json!("decrease"))),
        case("switch_roles", &queue, app("x", SwitchRoles, &[("p_r1", "p_c"), ("p_r2", "p_we")])),
        case("resource_memory", &depot, app("x", ResourceMemory, &[("p_m", "p_depot_mem"), ("p_r", "p_depots")])),
        case("ignore_batching", &loading, app("x", IgnoreBatching, &[("p_from", "p_van_half"), ("p_to", "p_van_full")])),
        case("long_duration", &meter, app("x", LongDuration, &[("t", "add_meter")])),
    ];
    cases.sort_by(|a, b| a.name.cmp(&b.name));
    cases
}

/// Identifiers of a marking, for checking the reduced-case bound.
pub fn identifier_count(m: &Marking) -> usize {
    m.identifiers().len()
}

/// Every application of a fixture grid, keyed by id.
pub fn grid_applications(grid: &GridSpec) -> BTreeMap<String, PatternApplication> {
    grid.behavioral_sets
        .iter()
        .flat_map(|s| &s.applications)
        .chain(grid.recording_sets.iter().flat_map(|s| &s.applications))
        .map(|a| (a.application_id.clone(), a.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::validate_net;
    use crate::transform::apply_sequence;

    #[test]
    fn fixtures_are_well_formed() {
        for name in FIXTURE_NAMES {
            let (net, grid) = fixture(name).unwrap();
            assert_eq!(validate_net(&net), vec![], "{name}");
            for cell in crate::dataset::enumerate_cells(&grid) {
                let (ms, _) = apply_sequence(&net, &cell.behavioral.applications).unwrap();
                let (ml, _) = apply_sequence(&ms, &cell.recording.applications).unwrap();
                assert_eq!(validate_net(&ml), vec![], "{name} {}", cell.id);
                cell.config.config.validate(&ml).unwrap();
            }
        }
    }

    #[test]
    fn unknown_fixture_is_rejected() {
        assert_eq!(fixture("bakery").unwrap_err(), FixtureError::UnknownFixture("bakery".into()));
    }

    #[test]
    fn package_types_and_resources() {
        let net = package_delivery();
        let mut types = net.object_types.clone();
        types.sort();
        assert_eq!(types, ["courier", "depot", "package", "queue", "van", "warehouse_employee"]);
        assert_eq!(net.initial_marking.place_tokens("p_we").count(), 2);
        assert_eq!(net.initial_marking.place_tokens("p_c").count(), 2);
    }

    #[test]
    fn assembly_has_seven_stages_and_three_operators() {
        let net = assembly();
        assert_eq!(net.transitions.iter().filter(|t| t.id.ends_with("_step1")).count(), 7);
        let ops: usize = ["p_operator_ag", "p_operator_bf", "p_operator_cde"]
            .iter()
            .map(|p| net.initial_marking.place_tokens(p).count())
            .sum();
        assert_eq!(ops, 3);
    }

    #[test]
    fn additivity_cases_cover_the_catalog() {
        let cases = additivity_cases();
        let codes: std::collections::BTreeSet<_> = cases.iter().map(|c| c.application.code).collect();
        assert_eq!(codes.len(), 16);
        for c in &cases {
            assert!(identifier_count(&c.net.initial_marking) <= 6, "{}", c.name);
            assert_eq!(validate_net(&c.net), vec![], "{}", c.name);
        }
    }
}
