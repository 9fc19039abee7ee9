//! Text configuration format.
//!
//! Flat `key = value` lines grouped under `[section]` headers. `#` and `;`
//! start comments. Recognised sections are `[cluster]`, `[partition]`,
//! `[schedule]`, `[traffic]`, `[service]` and `[simulation]`; every key is
//! optional except `traffic.lambda_low`. See the README for the key list.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::model::{
    validate_config, AimdParams, ClusterSpec, ConfigError, FlowSizeLaw, Partition, RackClass,
    RackSet, ServiceDistribution, ServiceModel, SimOptions, SourceType, TrafficProfile,
    ValidatedConfig, Violation,
};
use crate::scheduler::{build_schedule, partition_racks, SchedulePolicy};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}{}: {message}", key_suffix(.key))]
pub struct ParseError {
    pub line: usize,
    pub key: Option<String>,
    pub message: String,
}

fn key_suffix(key: &Option<String>) -> String {
    key.as_ref().map(|k| format!(", key `{k}`")).unwrap_or_default()
}

impl ParseError {
    pub fn new(line: usize, key: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            line,
            key: key.map(str::to_string),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

/// Splits text into sections. Keys before the first header are an error, as
/// are repeated section headers.
pub fn parse_sections(text: &str) -> Result<Vec<Section>, ParseError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ParseError::new(line, None, "unterminated section header"))?
                .trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ParseError::new(line, None, format!("bad section name `{name}`")));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(ParseError::new(line, None, format!("section [{name}] repeated")));
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ParseError::new(line, None, "expected `key = value`"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ParseError::new(line, None, "empty key"));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| ParseError::new(line, Some(key), "key outside any section"))?;
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(sections)
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

impl Entry {
    pub fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::new(self.line, Some(&self.key), message)
    }

    pub fn f64(&self) -> Result<f64, ParseError> {
        parse_f64(&self.value).ok_or_else(|| self.error(format!("`{}` is not a number", self.value)))
    }

    pub fn usize(&self) -> Result<usize, ParseError> {
        self.value
            .parse()
            .map_err(|_| self.error(format!("`{}` is not a non-negative integer", self.value)))
    }

    pub fn u64(&self) -> Result<u64, ParseError> {
        self.value
            .parse()
            .map_err(|_| self.error(format!("`{}` is not a non-negative integer", self.value)))
    }

    pub fn bool(&self) -> Result<bool, ParseError> {
        match self.value.as_str() {
            "true" | "on" | "yes" | "1" => Ok(true),
            "false" | "off" | "no" | "0" => Ok(false),
            v => Err(self.error(format!("`{v}` is not a boolean"))),
        }
    }

    /// Comma-separated integers; `a-b` expands to the inclusive range.
    pub fn usize_list(&self) -> Result<Vec<usize>, ParseError> {
        parse_index_list(&self.value).map_err(|m| self.error(m))
    }

    pub fn f64_list(&self) -> Result<Vec<f64>, ParseError> {
        split_list(&self.value)
            .map(|s| parse_f64(s).ok_or_else(|| self.error(format!("`{s}` is not a number"))))
            .collect()
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Decimal number or `inf`. NaN is rejected.
pub fn parse_f64(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
        return Some(f64::INFINITY);
    }
    if !s.starts_with(|c: char| c.is_ascii_digit() || c == '.' || c == '-' || c == '+') {
        return None;
    }
    s.parse::<f64>().ok().filter(|x| !x.is_nan())
}

const MAX_RANGE: usize = 1 << 20;

fn parse_index_list(value: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in split_list(value) {
        if let Some((a, b)) = item.split_once('-') {
            let a: usize = a.trim().parse().map_err(|_| format!("bad range `{item}`"))?;
            let b: usize = b.trim().parse().map_err(|_| format!("bad range `{item}`"))?;
            if a > b || b - a > MAX_RANGE {
                return Err(format!("bad range `{item}`"));
            }
            out.extend(a..=b);
        } else {
            out.push(item.parse().map_err(|_| format!("`{item}` is not an index"))?);
        }
    }
    Ok(out)
}

/// Splits `name(arg, ...)` into its name and arguments.
fn call_syntax(value: &str) -> Option<(&str, Vec<&str>)> {
    let value = value.trim();
    match value.split_once('(') {
        None => Some((value, Vec::new())),
        Some((name, rest)) => {
            let args = rest.strip_suffix(')')?;
            Some((name.trim(), split_list(args).collect()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionSpec {
    /// Automatic grouping of `n_data_racks` with the given hotspot racks.
    Auto { hotspot_racks: Vec<usize> },
    /// Explicit sets; set ids follow declaration order.
    Explicit(Vec<RackSet>),
}

/// Parsed configuration file, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub cluster: ClusterSpec,
    pub partition: PartitionSpec,
    pub slot_length: f64,
    /// `None` picks interleaving when both classes exist, else round robin.
    pub policy: Option<SchedulePolicy>,
    pub traffic: TrafficProfile,
    /// `None` means one packet time, `packet_bytes * 8 / fso_rate`.
    pub mean_service: Option<f64>,
    pub service_distribution: ServiceDistribution,
    pub options: SimOptions,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            cluster: ClusterSpec::default(),
            partition: PartitionSpec::Auto {
                hotspot_racks: Vec::new(),
            },
            slot_length: 0.01,
            policy: None,
            traffic: TrafficProfile::with_rates(0.0, 0.0),
            mean_service: None,
            service_distribution: ServiceDistribution::Exponential,
            options: SimOptions::default(),
        }
    }
}

/// Tracks duplicate keys within one section.
struct Seen<'a> {
    keys: HashSet<&'a str>,
}

impl<'a> Seen<'a> {
    fn new() -> Self {
        Self {
            keys: HashSet::new(),
        }
    }

    fn check(&mut self, e: &'a Entry) -> Result<(), ParseError> {
        if self.keys.insert(&e.key) {
            Ok(())
        } else {
            Err(e.error("key repeated"))
        }
    }
}

fn unknown(e: &Entry, section: &str) -> ParseError {
    e.error(format!("unknown key in [{section}]"))
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let sections = parse_sections(text)?;
        let mut cfg = ConfigFile::default();
        let mut lambda_low = None;
        let mut lambda_hot = None;
        let mut beta = None;
        let mut source_line = 0;
        let mut tcp_keys: Option<&Entry> = None;
        let mut aimd = AimdParams::default();
        let mut saw_traffic = false;

        for section in &sections {
            let mut seen = Seen::new();
            let name = section.name.as_str();
            match name {
                "cluster" => {
                    for e in &section.entries {
                        seen.check(e)?;
                        let c = &mut cfg.cluster;
                        match e.key.as_str() {
                            "n_data_racks" => c.n_data_racks = e.usize()?,
                            "n_nms_racks" => c.n_nms_racks = e.usize()?,
                            "bundle_capacity" => c.bundle_capacity = e.usize()?,
                            "fso_rate" => c.fso_rate = e.f64()?,
                            "primary_buffer" => c.primary_buffer = e.usize()?,
                            "backup_buffer" => c.backup_buffer = e.usize()?,
                            "backup_drain_rate" => c.backup_drain_rate = e.f64()?,
                            "switchover_delay" => c.switchover_delay = e.f64()?,
                            _ => return Err(unknown(e, name)),
                        }
                    }
                }
                "partition" => {
                    let mut auto: Option<Vec<usize>> = None;
                    let mut sets = Vec::new();
                    for e in &section.entries {
                        match e.key.as_str() {
                            "hotspot_racks" => {
                                seen.check(e)?;
                                auto = Some(e.usize_list()?);
                            }
                            "set" => sets.push(parse_set(e, sets.len())?),
                            _ => return Err(unknown(e, name)),
                        }
                    }
                    cfg.partition = match (auto, sets.is_empty()) {
                        (Some(_), false) => {
                            return Err(ParseError::new(
                                section.line,
                                Some("set"),
                                "use either hotspot_racks or explicit sets, not both",
                            ))
                        }
                        (Some(hotspot_racks), true) => PartitionSpec::Auto { hotspot_racks },
                        (None, false) => PartitionSpec::Explicit(sets),
                        (None, true) => PartitionSpec::Auto {
                            hotspot_racks: Vec::new(),
                        },
                    };
                }
                "schedule" => {
                    let mut policy_name: Option<&Entry> = None;
                    let mut slots = None;
                    for e in &section.entries {
                        seen.check(e)?;
                        match e.key.as_str() {
                            "slot_length" => cfg.slot_length = e.f64()?,
                            "policy" => policy_name = Some(e),
                            "slots" => slots = Some(e.usize_list()?),
                            _ => return Err(unknown(e, name)),
                        }
                    }
                    cfg.policy = match (policy_name.map(|e| (e, e.value.as_str())), slots) {
                        (None, None) => None,
                        (Some((_, "interleaved")), None) => Some(SchedulePolicy::InterleavedHotspot),
                        (Some((_, "round_robin")), None) => Some(SchedulePolicy::RoundRobin),
                        (Some((_, "custom")) | None, Some(list)) => Some(SchedulePolicy::Custom(list)),
                        (Some((e, "custom")), None) => {
                            return Err(e.error("custom policy needs a `slots` list"))
                        }
                        (Some((e, _)), Some(_)) => {
                            return Err(e.error("`slots` is only valid with policy = custom"))
                        }
                        (Some((e, v)), None) => {
                            return Err(e.error(format!(
                                "`{v}` is not one of interleaved, round_robin, custom"
                            )))
                        }
                    };
                }
                "traffic" => {
                    saw_traffic = true;
                    for e in &section.entries {
                        seen.check(e)?;
                        let t = &mut cfg.traffic;
                        match e.key.as_str() {
                            "lambda_low" => lambda_low = Some(e.f64()?),
                            "lambda_hot" => lambda_hot = Some(e.f64()?),
                            "beta" => beta = Some(e.f64()?),
                            "flow_size" => t.flow_size_law = parse_flow_size(e)?,
                            "source" => {
                                t.source_type = parse_source(e)?;
                                source_line = e.line;
                            }
                            "qos_deadline" => t.qos_deadline = e.f64()?,
                            "packet_bytes" => {
                                t.packet_bytes = u32::try_from(e.u64()?)
                                    .map_err(|_| e.error("packet size too large"))?
                            }
                            "loopback_filter_udp" => t.loopback_filter_udp = e.bool()?,
                            "coupling_rate" => t.coupling_rate = Some(e.f64()?),
                            k if k.starts_with("tcp_") => {
                                tcp_keys = Some(e);
                                match k {
                                    "tcp_initial_window" => aimd.initial_window = e.f64()?,
                                    "tcp_ssthresh" => aimd.ssthresh = e.f64()?,
                                    "tcp_rtt" => aimd.rtt = e.f64()?,
                                    "tcp_mss" => {
                                        aimd.mss = u32::try_from(e.u64()?)
                                            .map_err(|_| e.error("segment size too large"))?
                                    }
                                    "tcp_loss_response" => aimd.loss_response = e.f64()?,
                                    "tcp_max_window" => aimd.max_window = e.f64()?,
                                    "tcp_min_rto" => aimd.min_rto = e.f64()?,
                                    _ => return Err(unknown(e, name)),
                                }
                            }
                            _ => return Err(unknown(e, name)),
                        }
                    }
                }
                "service" => {
                    let mut dist = None;
                    for e in &section.entries {
                        seen.check(e)?;
                        match e.key.as_str() {
                            "mean_service" => cfg.mean_service = Some(e.f64()?),
                            "distribution" => dist = Some(parse_distribution(e)?),
                            _ => return Err(unknown(e, name)),
                        }
                    }
                    if let Some(d) = dist {
                        cfg.service_distribution = d;
                    }
                }
                "simulation" => {
                    for e in &section.entries {
                        seen.check(e)?;
                        match e.key.as_str() {
                            "warmup_fraction" => cfg.options.warmup_fraction = e.f64()?,
                            "non_preemptive" => cfg.options.non_preemptive = e.bool()?,
                            _ => return Err(unknown(e, name)),
                        }
                    }
                }
                other => {
                    return Err(ParseError::new(
                        section.line,
                        None,
                        format!("unknown section [{other}]"),
                    ))
                }
            }
        }

        if !saw_traffic {
            return Err(ParseError::new(0, Some("lambda_low"), "missing [traffic] section"));
        }
        let lambda_low =
            lambda_low.ok_or_else(|| ParseError::new(0, Some("lambda_low"), "required key missing"))?;
        let t = &mut cfg.traffic;
        t.lambda_low = lambda_low;
        match (lambda_hot, beta) {
            (Some(h), Some(b)) => {
                t.lambda_hot = h;
                t.beta = b;
            }
            (Some(h), None) => {
                t.lambda_hot = h;
                t.beta = crate::model::beta_of(lambda_low, h);
            }
            (None, Some(b)) => {
                t.lambda_hot = lambda_low / b;
                t.beta = b;
            }
            (None, None) => {
                t.lambda_hot = lambda_low;
                t.beta = 1.0;
            }
        }
        match (&mut t.source_type, tcp_keys) {
            (SourceType::TcpAimd(p), _) => *p = aimd,
            (_, Some(e)) => {
                return Err(e.error(format!(
                    "tcp_* keys need `source = tcp` (source set on line {source_line})"
                )))
            }
            _ => {}
        }
        Ok(cfg)
    }

    pub fn service_model(&self) -> ServiceModel {
        ServiceModel {
            mean_service: self.mean_service.unwrap_or_else(|| {
                f64::from(self.traffic.packet_bytes) * 8.0 / self.cluster.fso_rate
            }),
            distribution: self.service_distribution,
        }
    }

    pub fn build_partition(&self) -> Result<Partition, ConfigError> {
        match &self.partition {
            PartitionSpec::Auto { hotspot_racks } => partition_racks(
                self.cluster.n_data_racks,
                self.cluster.bundle_capacity,
                hotspot_racks,
            )
            .map_err(|e| single("partition", e.to_string())),
            PartitionSpec::Explicit(sets) => Ok(Partition::from_sets(sets.clone())),
        }
    }

    pub fn effective_policy(&self, partition: &Partition) -> SchedulePolicy {
        self.policy.clone().unwrap_or(if partition.k_hot > 0 && partition.k_low > 0 {
            SchedulePolicy::InterleavedHotspot
        } else {
            SchedulePolicy::RoundRobin
        })
    }

    /// Derives partition and schedule, then validates everything.
    pub fn build(&self) -> Result<ValidatedConfig, ConfigError> {
        let partition = self.build_partition()?;
        let policy = self.effective_policy(&partition);
        let schedule = build_schedule(&partition, self.slot_length, &policy).map_err(|e| {
            // Report cluster-level violations alongside the schedule error.
            let mut v = cluster_violations(self);
            v.push(Violation::new("schedule", e.to_string()));
            ConfigError::Violations(v)
        })?;
        validate_config(
            &self.cluster,
            &partition,
            &schedule,
            &self.traffic,
            &self.service_model(),
            &self.options,
        )
    }
}

fn single(field: &'static str, message: String) -> ConfigError {
    ConfigError::Violations(vec![Violation::new(field, message)])
}

fn cluster_violations(cfg: &ConfigFile) -> Vec<Violation> {
    let mut v = Vec::new();
    crate::model::check_cluster(&cfg.cluster, &mut v);
    v
}

/// Reads the file at `path` and parses it.
pub fn load_config(path: &std::path::Path) -> Result<ConfigFile, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(ConfigFile::parse(&text)?)
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

fn parse_set(e: &Entry, set_id: usize) -> Result<RackSet, ParseError> {
    let (class, racks) = e
        .value
        .split_once(':')
        .ok_or_else(|| e.error("expected `hotspot: ids` or `low: ids`"))?;
    let class = match class.trim() {
        "hotspot" | "hot" => RackClass::Hotspot,
        "low" | "non-hotspot" => RackClass::NonHotspot,
        other => return Err(e.error(format!("unknown set class `{other}`"))),
    };
    let rack_ids = parse_index_list(racks).map_err(|m| e.error(m))?;
    Ok(RackSet {
        set_id,
        rack_ids,
        class,
    })
}

fn parse_flow_size(e: &Entry) -> Result<FlowSizeLaw, ParseError> {
    let bad = || e.error("expected uniform(min, max) or fixed_packets(n)");
    let (name, args) = call_syntax(&e.value).ok_or_else(bad)?;
    let int = |s: &str| s.parse::<u64>().map_err(|_| bad());
    match (name, args.as_slice()) {
        ("uniform", [a, b]) => Ok(FlowSizeLaw::UniformBytes {
            min: int(a)?,
            max: int(b)?,
        }),
        ("fixed_packets", [n]) => Ok(FlowSizeLaw::FixedPackets(int(n)?)),
        _ => Err(bad()),
    }
}

fn parse_source(e: &Entry) -> Result<SourceType, ParseError> {
    let bad = || e.error("expected poisson, udp(rate_bps) or tcp");
    let (name, args) = call_syntax(&e.value).ok_or_else(bad)?;
    match (name, args.as_slice()) {
        ("poisson", []) => Ok(SourceType::PoissonPacket),
        ("udp", [r]) => Ok(SourceType::UdpConstantRate {
            rate_bps: parse_f64(r).ok_or_else(bad)?,
        }),
        ("tcp", []) => Ok(SourceType::TcpAimd(AimdParams::default())),
        _ => Err(bad()),
    }
}

fn parse_distribution(e: &Entry) -> Result<ServiceDistribution, ParseError> {
    let bad = || e.error("expected exponential, deterministic or general(m2, m3)");
    let (name, args) = call_syntax(&e.value).ok_or_else(bad)?;
    match (name, args.as_slice()) {
        ("exponential", []) => Ok(ServiceDistribution::Exponential),
        ("deterministic", []) => Ok(ServiceDistribution::Deterministic),
        ("general", [a, b]) => Ok(ServiceDistribution::GeneralMoments {
            m2: parse_f64(a).ok_or_else(bad)?,
            m3: parse_f64(b).ok_or_else(bad)?,
        }),
        _ => Err(bad()),
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, ids: &[usize]) -> fmt::Result {
    let parts: Vec<String> = ids.iter().map(usize::to_string).collect();
    f.write_str(&parts.join(", "))
}

/// Canonical text form; parsing it yields an equal `ConfigFile`.
impl fmt::Display for ConfigFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.cluster;
        writeln!(f, "[cluster]")?;
        writeln!(f, "n_data_racks = {}", c.n_data_racks)?;
        writeln!(f, "n_nms_racks = {}", c.n_nms_racks)?;
        writeln!(f, "bundle_capacity = {}", c.bundle_capacity)?;
        writeln!(f, "fso_rate = {:?}", c.fso_rate)?;
        writeln!(f, "primary_buffer = {}", c.primary_buffer)?;
        writeln!(f, "backup_buffer = {}", c.backup_buffer)?;
        writeln!(f, "backup_drain_rate = {:?}", c.backup_drain_rate)?;
        writeln!(f, "switchover_delay = {:?}", c.switchover_delay)?;

        writeln!(f, "\n[partition]")?;
        match &self.partition {
            PartitionSpec::Auto { hotspot_racks } => {
                write!(f, "hotspot_racks = ")?;
                write_list(f, hotspot_racks)?;
                writeln!(f)?;
            }
            PartitionSpec::Explicit(sets) => {
                for s in sets {
                    let class = match s.class {
                        RackClass::Hotspot => "hotspot",
                        RackClass::NonHotspot => "low",
                    };
                    write!(f, "set = {class}: ")?;
                    write_list(f, &s.rack_ids)?;
                    writeln!(f)?;
                }
            }
        }

        writeln!(f, "\n[schedule]")?;
        writeln!(f, "slot_length = {:?}", self.slot_length)?;
        match &self.policy {
            None => {}
            Some(SchedulePolicy::InterleavedHotspot) => writeln!(f, "policy = interleaved")?,
            Some(SchedulePolicy::RoundRobin) => writeln!(f, "policy = round_robin")?,
            Some(SchedulePolicy::Custom(list)) => {
                writeln!(f, "policy = custom")?;
                write!(f, "slots = ")?;
                write_list(f, list)?;
                writeln!(f)?;
            }
        }

        let t = &self.traffic;
        writeln!(f, "\n[traffic]")?;
        writeln!(f, "lambda_low = {:?}", t.lambda_low)?;
        writeln!(f, "lambda_hot = {:?}", t.lambda_hot)?;
        writeln!(f, "beta = {:?}", t.beta)?;
        match t.flow_size_law {
            FlowSizeLaw::UniformBytes { min, max } => writeln!(f, "flow_size = uniform({min}, {max})")?,
            FlowSizeLaw::FixedPackets(n) => writeln!(f, "flow_size = fixed_packets({n})")?,
        }
        match t.source_type {
            SourceType::PoissonPacket => writeln!(f, "source = poisson")?,
            SourceType::UdpConstantRate { rate_bps } => writeln!(f, "source = udp({rate_bps:?})")?,
            SourceType::TcpAimd(a) => {
                writeln!(f, "source = tcp")?;
                writeln!(f, "tcp_initial_window = {:?}", a.initial_window)?;
                writeln!(f, "tcp_ssthresh = {:?}", a.ssthresh)?;
                writeln!(f, "tcp_rtt = {:?}", a.rtt)?;
                writeln!(f, "tcp_mss = {}", a.mss)?;
                writeln!(f, "tcp_loss_response = {:?}", a.loss_response)?;
                writeln!(f, "tcp_max_window = {:?}", a.max_window)?;
                writeln!(f, "tcp_min_rto = {:?}", a.min_rto)?;
            }
        }
        writeln!(f, "qos_deadline = {}", fmt_f64(t.qos_deadline))?;
        writeln!(f, "packet_bytes = {}", t.packet_bytes)?;
        writeln!(f, "loopback_filter_udp = {}", t.loopback_filter_udp)?;
        if let Some(r) = t.coupling_rate {
            writeln!(f, "coupling_rate = {r:?}")?;
        }

        writeln!(f, "\n[service]")?;
        if let Some(m) = self.mean_service {
            writeln!(f, "mean_service = {m:?}")?;
        }
        match self.service_distribution {
            ServiceDistribution::Exponential => writeln!(f, "distribution = exponential")?,
            ServiceDistribution::Deterministic => writeln!(f, "distribution = deterministic")?,
            ServiceDistribution::GeneralMoments { m2, m3 } => {
                writeln!(f, "distribution = general({m2:?}, {m3:?})")?
            }
        }

        writeln!(f, "\n[simulation]")?;
        writeln!(f, "warmup_fraction = {:?}", self.options.warmup_fraction)?;
        writeln!(f, "non_preemptive = {}", self.options.non_preemptive)
    }
}

fn fmt_f64(x: f64) -> String {
    if x.is_infinite() && x > 0.0 {
        "inf".to_string()
    } else {
        format!("{x:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = "
[cluster]
n_data_racks = 24
bundle_capacity = 4

[partition]
hotspot_racks = 20-23

[schedule]
slot_length = 0.01

[traffic]
lambda_low = 50    # packets per second per rack
beta = 0.1
qos_deadline = inf
";

    #[test]
    fn canonical_config_builds() {
        let cfg = ConfigFile::parse(CANONICAL).unwrap();
        assert_eq!(cfg.traffic.lambda_hot, 500.0);
        let v = cfg.build().unwrap();
        assert_eq!(v.partition().k_low, 5);
        assert_eq!(v.partition().k_hot, 1);
        assert_eq!(v.schedule().slots.len(), 10);
        assert!((v.service().mean_service - 1.2e-5).abs() < 1e-18);
    }

    #[test]
    fn errors_carry_line_and_key() {
        let err = ConfigFile::parse("[cluster]\nfso_rate = fast\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.key.as_deref(), Some("fso_rate"));

        let err = ConfigFile::parse("[cluster]\nbogus = 1\n").unwrap_err();
        assert_eq!((err.line, err.key.as_deref()), (2, Some("bogus")));

        let err = ConfigFile::parse("[traffic]\nlambda_low = 1\nlambda_low = 2\n").unwrap_err();
        assert_eq!(err.line, 3);

        let err = ConfigFile::parse("lambda_low = 1\n").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn missing_rate_is_reported() {
        let err = ConfigFile::parse("[traffic]\nbeta = 0.5\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("lambda_low"));
    }

    #[test]
    fn p_greater_than_n_is_a_violation() {
        let text = "[cluster]\nn_data_racks = 3\nbundle_capacity = 4\n[traffic]\nlambda_low = 1\n";
        let err = ConfigFile::parse(text).unwrap().build().unwrap_err();
        assert!(err.violations().iter().any(|v| v.field == "bundle_capacity"));
    }

    #[test]
    fn explicit_sets_and_custom_slots() {
        let text = "
[cluster]
n_data_racks = 4
bundle_capacity = 2
[partition]
set = low: 0, 1
set = hotspot: 2-3
[schedule]
policy = custom
slots = 0, 1, 1
[traffic]
lambda_low = 1
lambda_hot = 2
source = udp(1e8)
";
        let cfg = ConfigFile::parse(text).unwrap();
        let v = cfg.build().unwrap();
        assert_eq!(v.schedule().slots, vec![0, 1, 1]);
        assert_eq!(v.traffic().beta, 0.5);
    }

    #[test]
    fn tcp_keys_need_tcp_source() {
        let text = "[traffic]\nlambda_low = 1\ntcp_rtt = 0.001\n";
        assert!(ConfigFile::parse(text).is_err());
        let text = "[traffic]\nlambda_low = 1\ntcp_rtt = 0.001\nsource = tcp\n";
        let cfg = ConfigFile::parse(text).unwrap();
        match cfg.traffic.source_type {
            SourceType::TcpAimd(a) => assert_eq!(a.rtt, 0.001),
            _ => panic!("tcp expected"),
        }
    }

    #[test]
    fn display_round_trips() {
        for text in [
            CANONICAL,
            "[traffic]\nlambda_low = 3\nsource = tcp\ntcp_mss = 9000\nflow_size = uniform(1, 9)\n\
             [service]\ndistribution = general(2e-6, 6e-9)\nmean_service = 0.001\n\
             [partition]\nset = low: 0\nset = hot: 1\n[schedule]\npolicy = custom\nslots = 1, 0\n",
        ] {
            let a = ConfigFile::parse(text).unwrap();
            let b = ConfigFile::parse(&a.to_string()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn huge_ranges_are_rejected() {
        let text = "[partition]\nhotspot_racks = 0-99999999999\n[traffic]\nlambda_low = 1\n";
        assert!(ConfigFile::parse(text).is_err());
    }
}
