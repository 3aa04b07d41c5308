//! Seeded generators for UEBA behaviour records and KDD-layout flow records.
//!
//! The UEBA generator stands in for a behaviour-analytics corpus: per-user
//! daily activity counters with a benign and a malicious profile that overlap.
//! The IDS generator emits lines in the 41-feature KDD layout with per-attack
//! profiles loosely shaped after the public traffic captures. Neither is a
//! reproduction of any real corpus; both exist so the full pipeline can run
//! at desk scale and in tests.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::records::{parse_ids_records, parse_ueba_records, RawRecord};
use super::schema::{FusionSchema, ThreatClass};

/// Number of IDS records to generate per class.
#[derive(Debug, Clone, PartialEq)]
pub struct IdsMix {
    pub counts: Vec<(ThreatClass, usize)>,
}

impl IdsMix {
    pub fn uniform(per_class: usize) -> Self {
        Self {
            counts: [
                ThreatClass::Normal,
                ThreatClass::DoS,
                ThreatClass::Probe,
                ThreatClass::R2L,
                ThreatClass::U2R,
            ]
            .into_iter()
            .map(|c| (c, per_class))
            .collect(),
        }
    }

    /// Class proportions of the NSL-KDD training file
    /// (67343 / 45927 / 11656 / 995 / 52 of 125973), with at least `min_rare`
    /// rows for each class.
    pub fn nsl_kdd_like(total: usize, min_rare: usize) -> Self {
        let shares = [
            (ThreatClass::Normal, 67343.0),
            (ThreatClass::DoS, 45927.0),
            (ThreatClass::Probe, 11656.0),
            (ThreatClass::R2L, 995.0),
            (ThreatClass::U2R, 52.0),
        ];
        let sum: f64 = shares.iter().map(|(_, s)| s).sum();
        Self {
            counts: shares
                .iter()
                .map(|&(c, s)| (c, ((total as f64 * s / sum).round() as usize).max(min_rare)))
                .collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|(_, n)| n).sum()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn lognormal(rng: &mut ChaCha8Rng, mu: f64, sigma: f64) -> f64 {
    (mu + sigma * normal(rng)).exp()
}

fn rate(rng: &mut ChaCha8Rng, centre: f64, spread: f64) -> f64 {
    (centre + spread * normal(rng)).clamp(0.0, 1.0)
}

fn count(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> f64 {
    rng.gen_range(lo..=hi) as f64
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options.choose(rng).expect("non-empty options")
}

/// The 41 KDD feature values for one flow of the given attack label.
fn ids_fields(label: &str, rng: &mut ChaCha8Rng) -> [String; 41] {
    // Indices into the KDD column order.
    const DURATION: usize = 0;
    const PROTOCOL: usize = 1;
    const SERVICE: usize = 2;
    const FLAG: usize = 3;
    const SRC_BYTES: usize = 4;
    const DST_BYTES: usize = 5;
    const WRONG_FRAGMENT: usize = 7;
    const HOT: usize = 9;
    const FAILED_LOGINS: usize = 10;
    const LOGGED_IN: usize = 11;
    const NUM_COMPROMISED: usize = 12;
    const ROOT_SHELL: usize = 13;
    const NUM_ROOT: usize = 15;
    const FILE_CREATIONS: usize = 16;
    const NUM_SHELLS: usize = 17;
    const ACCESS_FILES: usize = 18;
    const GUEST_LOGIN: usize = 21;
    const COUNT: usize = 22;
    const SRV_COUNT: usize = 23;
    const SERROR: usize = 24;
    const SRV_SERROR: usize = 25;
    const RERROR: usize = 26;
    const SRV_RERROR: usize = 27;
    const SAME_SRV: usize = 28;
    const DIFF_SRV: usize = 29;
    const SRV_DIFF_HOST: usize = 30;
    const DH_COUNT: usize = 31;
    const DH_SRV_COUNT: usize = 32;
    const DH_SAME_SRV: usize = 33;
    const DH_DIFF_SRV: usize = 34;
    const DH_SAME_SRC_PORT: usize = 35;
    const DH_SRV_DIFF_HOST: usize = 36;
    const DH_SERROR: usize = 37;
    const DH_SRV_SERROR: usize = 38;
    const DH_RERROR: usize = 39;
    const DH_SRV_RERROR: usize = 40;

    let mut v = [0.0f64; 41];
    let mut protocol = "tcp";
    let mut service = "http";
    let mut flag = "SF";

    // Baseline: an ordinary short session.
    v[COUNT] = count(rng, 1, 25);
    v[SRV_COUNT] = count(rng, 1, 25);
    v[SAME_SRV] = rate(rng, 0.95, 0.08);
    v[DIFF_SRV] = rate(rng, 0.03, 0.05);
    v[DH_COUNT] = count(rng, 10, 255);
    v[DH_SRV_COUNT] = count(rng, 30, 255);
    v[DH_SAME_SRV] = rate(rng, 0.85, 0.15);
    v[DH_DIFF_SRV] = rate(rng, 0.03, 0.04);
    v[DH_SAME_SRC_PORT] = rate(rng, 0.05, 0.08);
    v[DH_SRV_DIFF_HOST] = rate(rng, 0.03, 0.04);

    match label {
        "normal" => {
            protocol = pick(rng, &["tcp", "tcp", "tcp", "tcp", "udp", "icmp"]);
            service = match protocol {
                "udp" => pick(rng, &["domain_u", "private", "ntp_u", "other"]),
                "icmp" => pick(rng, &["eco_i", "ecr_i", "urp_i"]),
                _ => pick(rng, &["http", "http", "http", "smtp", "ftp_data", "ftp", "telnet", "private", "other"]),
            };
            flag = if rng.gen_bool(0.93) { "SF" } else { pick(rng, &["REJ", "S0", "RSTO"]) };
            v[DURATION] = if rng.gen_bool(0.85) { 0.0 } else { lognormal(rng, 4.0, 2.0).round() };
            v[SRC_BYTES] = lognormal(rng, 5.5, 1.3).round();
            v[DST_BYTES] = lognormal(rng, 7.5, 1.8).round();
            v[LOGGED_IN] = f64::from(protocol == "tcp" && rng.gen_bool(0.9));
            v[HOT] = if rng.gen_bool(0.1) { count(rng, 1, 4) } else { 0.0 };
            if rng.gen_bool(0.03) {
                v[FAILED_LOGINS] = 1.0;
            }
            if rng.gen_bool(0.02) {
                v[NUM_COMPROMISED] = 1.0;
                v[FILE_CREATIONS] = count(rng, 1, 2);
            }
        }
        "neptune" => {
            service = pick(rng, &["private", "other", "http", "telnet", "ftp", "finger", "smtp"]);
            flag = if rng.gen_bool(0.9) { "S0" } else { "REJ" };
            v[COUNT] = count(rng, 80, 511);
            v[SRV_COUNT] = count(rng, 1, 30);
            v[SERROR] = rate(rng, 0.98, 0.05);
            v[SRV_SERROR] = rate(rng, 0.98, 0.05);
            v[SAME_SRV] = rate(rng, 0.06, 0.05);
            v[DIFF_SRV] = rate(rng, 0.06, 0.04);
            v[DH_COUNT] = 255.0;
            v[DH_SRV_COUNT] = count(rng, 1, 30);
            v[DH_SAME_SRV] = rate(rng, 0.06, 0.05);
            v[DH_DIFF_SRV] = rate(rng, 0.07, 0.04);
            v[DH_SERROR] = rate(rng, 0.98, 0.05);
            v[DH_SRV_SERROR] = rate(rng, 0.98, 0.05);
        }
        "smurf" | "pod" => {
            protocol = "icmp";
            service = "ecr_i";
            v[SRC_BYTES] = if label == "smurf" { pick(rng, &["1032", "520"]).parse().unwrap() } else { 1480.0 };
            v[WRONG_FRAGMENT] = if label == "pod" { 1.0 } else { 0.0 };
            v[COUNT] = if label == "smurf" { count(rng, 300, 511) } else { count(rng, 1, 5) };
            v[SRV_COUNT] = v[COUNT];
            v[SAME_SRV] = 1.0;
            v[DH_COUNT] = 255.0;
            v[DH_SRV_COUNT] = 255.0;
            v[DH_SAME_SRV] = 1.0;
            v[DH_SAME_SRC_PORT] = rate(rng, 0.9, 0.1);
        }
        "back" => {
            v[SRC_BYTES] = (54540.0 + 200.0 * normal(rng)).round();
            v[DST_BYTES] = (8314.0 + 500.0 * normal(rng)).round();
            v[HOT] = 2.0;
            v[LOGGED_IN] = 1.0;
            v[NUM_COMPROMISED] = 1.0;
        }
        "teardrop" => {
            protocol = "udp";
            service = "private";
            v[SRC_BYTES] = 28.0;
            v[WRONG_FRAGMENT] = 3.0;
            v[COUNT] = count(rng, 1, 120);
        }
        "satan" | "portsweep" | "nmap" | "ipsweep" => {
            match label {
                "ipsweep" => {
                    protocol = "icmp";
                    service = "eco_i";
                    v[SRC_BYTES] = pick(rng, &["8", "18"]).parse().unwrap();
                    v[DH_SRV_DIFF_HOST] = rate(rng, 0.6, 0.2);
                    v[SRV_DIFF_HOST] = rate(rng, 0.8, 0.2);
                }
                "portsweep" => {
                    service = "private";
                    flag = pick(rng, &["REJ", "RSTR", "RSTO", "SF"]);
                    v[SRV_RERROR] = rate(rng, 0.9, 0.15);
                    v[DH_SAME_SRC_PORT] = rate(rng, 0.9, 0.15);
                    v[DH_SRV_RERROR] = rate(rng, 0.8, 0.2);
                }
                "nmap" => {
                    protocol = pick(rng, &["tcp", "udp", "icmp"]);
                    service = pick(rng, &["private", "eco_i", "other"]);
                    flag = pick(rng, &["SF", "S0", "REJ"]);
                    v[DH_DIFF_SRV] = rate(rng, 0.5, 0.3);
                }
                _ => {
                    service = pick(rng, &["private", "other", "telnet", "finger", "ftp", "smtp", "http"]);
                    flag = pick(rng, &["REJ", "S0", "SF", "RSTO"]);
                    v[RERROR] = rate(rng, 0.7, 0.3);
                    v[SRV_RERROR] = rate(rng, 0.7, 0.3);
                    v[DH_RERROR] = rate(rng, 0.6, 0.3);
                }
            }
            v[DIFF_SRV] = rate(rng, 0.6, 0.3);
            v[SAME_SRV] = rate(rng, 0.2, 0.2);
            v[DH_COUNT] = count(rng, 1, 255);
            v[DH_SRV_COUNT] = count(rng, 1, 20);
            v[DH_SAME_SRV] = rate(rng, 0.1, 0.15);
            v[DH_DIFF_SRV] = v[DH_DIFF_SRV].max(rate(rng, 0.5, 0.3));
        }
        "guess_passwd" => {
            service = "telnet";
            flag = pick(rng, &["RSTO", "SF", "RSTO"]);
            v[SRC_BYTES] = (125.0 + 5.0 * normal(rng)).round().max(1.0);
            v[DST_BYTES] = (179.0 + 20.0 * normal(rng)).round().max(0.0);
            v[FAILED_LOGINS] = 1.0;
            v[DH_COUNT] = count(rng, 1, 255);
            v[DH_SRV_COUNT] = count(rng, 1, 50);
            v[DH_RERROR] = rate(rng, 0.3, 0.3);
        }
        "warezclient" | "warezmaster" | "ftp_write" | "imap" | "multihop" | "phf" => {
            service = match label {
                "imap" => "imap4",
                "phf" => "http",
                _ => pick(rng, &["ftp_data", "ftp"]),
            };
            v[DURATION] = lognormal(rng, 5.0, 2.0).round();
            v[SRC_BYTES] = lognormal(rng, 8.0, 2.0).round();
            v[DST_BYTES] = if label == "warezmaster" { lognormal(rng, 13.0, 1.0).round() } else { lognormal(rng, 5.0, 2.0).round() };
            v[LOGGED_IN] = 1.0;
            v[HOT] = count(rng, 0, 28);
            v[GUEST_LOGIN] = f64::from(label.starts_with("warez") && rng.gen_bool(0.8));
            v[COUNT] = count(rng, 1, 5);
            v[DH_COUNT] = count(rng, 1, 100);
            v[DH_SRV_COUNT] = count(rng, 1, 60);
            v[DH_SAME_SRC_PORT] = rate(rng, 0.5, 0.4);
        }
        _ => {
            // U2R: buffer_overflow, rootkit, loadmodule, perl and friends.
            service = pick(rng, &["telnet", "telnet", "ftp_data", "ftp", "login"]);
            v[DURATION] = lognormal(rng, 5.5, 1.5).round();
            v[SRC_BYTES] = lognormal(rng, 7.0, 1.2).round();
            v[DST_BYTES] = lognormal(rng, 8.0, 1.5).round();
            v[LOGGED_IN] = 1.0;
            v[HOT] = count(rng, 0, 6);
            v[ROOT_SHELL] = f64::from(rng.gen_bool(0.7));
            v[NUM_ROOT] = if rng.gen_bool(0.5) { count(rng, 1, 10) } else { 0.0 };
            v[FILE_CREATIONS] = if rng.gen_bool(0.6) { count(rng, 1, 4) } else { 0.0 };
            v[NUM_SHELLS] = f64::from(rng.gen_bool(0.3));
            v[ACCESS_FILES] = if rng.gen_bool(0.3) { 1.0 } else { 0.0 };
            v[NUM_COMPROMISED] = if rng.gen_bool(0.4) { count(rng, 1, 3) } else { 0.0 };
            v[COUNT] = count(rng, 1, 3);
            v[SRV_COUNT] = count(rng, 1, 3);
            v[DH_COUNT] = count(rng, 1, 60);
            v[DH_SRV_COUNT] = count(rng, 1, 30);
            v[DH_SAME_SRC_PORT] = rate(rng, 0.3, 0.3);
        }
    }

    let mut out: [String; 41] = std::array::from_fn(|i| {
        let x = v[i];
        if x.fract() == 0.0 {
            format!("{x:.0}")
        } else {
            format!("{x:.2}")
        }
    });
    out[PROTOCOL] = protocol.to_string();
    out[SERVICE] = service.to_string();
    out[FLAG] = flag.to_string();
    out
}

fn labels_for(class: ThreatClass) -> &'static [&'static str] {
    match class {
        ThreatClass::Normal => &["normal"],
        ThreatClass::DoS => &["neptune", "neptune", "neptune", "smurf", "back", "teardrop", "pod"],
        ThreatClass::Probe => &["satan", "ipsweep", "portsweep", "nmap"],
        ThreatClass::R2L => &["warezclient", "guess_passwd", "warezmaster", "imap", "ftp_write", "multihop", "phf"],
        ThreatClass::U2R => &["buffer_overflow", "rootkit", "loadmodule", "perl"],
        ThreatClass::Benign | ThreatClass::Malicious => &[],
    }
}

/// KDD-layout CSV lines (41 features, label, difficulty) in a seeded shuffle.
pub fn synthetic_ids_lines(mix: &IdsMix, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1d5_0000);
    let mut plan: Vec<ThreatClass> = Vec::with_capacity(mix.total());
    for &(class, n) in &mix.counts {
        assert_eq!(class.source(), crate::fusion::Source::Ids, "IDS mix holds IDS classes only");
        plan.extend(std::iter::repeat_n(class, n));
    }
    plan.shuffle(&mut rng);
    plan.into_iter()
        .map(|class| {
            let label = pick(&mut rng, labels_for(class));
            let fields = ids_fields(label, &mut rng);
            let difficulty = rng.gen_range(5..=21);
            format!("{},{label},{difficulty}", fields.join(","))
        })
        .collect()
}

pub fn synthetic_ids_records(mix: &IdsMix, seed: u64, schema: &FusionSchema) -> Vec<RawRecord> {
    let text = synthetic_ids_lines(mix, seed).join("\n");
    parse_ids_records(text.as_bytes(), schema).expect("generator emits valid KDD lines")
}

const ROLES: [&str; 5] = ["analyst", "engineer", "manager", "admin", "contractor"];
const DEPARTMENTS: [&str; 5] = ["finance", "rnd", "sales", "it", "hr"];

/// UEBA CSV (header row included) for the default schema's behaviour columns.
pub fn synthetic_ueba_csv(n_benign: usize, n_malicious: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0eba_0000);
    let mut plan: Vec<bool> = std::iter::repeat(false)
        .take(n_benign)
        .chain(std::iter::repeat(true).take(n_malicious))
        .collect();
    plan.shuffle(&mut rng);
    let mut out = String::from(
        "user_id,logon_count,after_hours_logons,distinct_hosts,usb_events,files_copied,\
         external_emails,upload_mb,failed_logins,privilege_changes,role,department,label\n",
    );
    for (i, malicious) in plan.into_iter().enumerate() {
        // A fifth of the malicious users behave almost normally.
        let stealthy = malicious && rng.gen_bool(0.2);
        let loud = malicious && !stealthy;
        let logons = (8.0 + 3.0 * normal(&mut rng)).round().max(1.0);
        let after_hours = if loud { count(&mut rng, 2, 9) } else { count(&mut rng, 0, 2) };
        let hosts = if loud { count(&mut rng, 2, 12) } else { count(&mut rng, 1, 4) };
        let usb = if loud && rng.gen_bool(0.7) { count(&mut rng, 2, 12) } else { count(&mut rng, 0, 1) };
        let files = if loud { lognormal(&mut rng, 4.5, 0.8) } else { lognormal(&mut rng, 2.0, 0.9) }.round();
        let emails = if loud { count(&mut rng, 3, 25) } else { count(&mut rng, 0, 8) };
        let upload = if loud { lognormal(&mut rng, 4.0, 1.0) } else { lognormal(&mut rng, 1.0, 1.0) };
        let failed = if malicious { count(&mut rng, 0, 4) } else { count(&mut rng, 0, 2) };
        let priv_changes = if loud && rng.gen_bool(0.5) { count(&mut rng, 1, 3) } else { 0.0 };
        let role = if loud && rng.gen_bool(0.5) {
            pick(&mut rng, &["admin", "contractor"])
        } else {
            pick(&mut rng, &ROLES)
        };
        let dept = pick(&mut rng, &DEPARTMENTS);
        let label = if malicious { "malicious" } else { "benign" };
        writeln!(
            out,
            "u{i:05},{logons},{after_hours},{hosts},{usb},{files},{emails},{upload:.2},{failed},{priv_changes},{role},{dept},{label}"
        )
        .expect("write to String");
    }
    out
}

pub fn synthetic_ueba_records(n_benign: usize, n_malicious: usize, seed: u64, schema: &FusionSchema) -> Vec<RawRecord> {
    let text = synthetic_ueba_csv(n_benign, n_malicious, seed);
    parse_ueba_records(text.as_bytes(), schema).expect("generator emits valid UEBA rows")
}
