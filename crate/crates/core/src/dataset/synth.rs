//! Deterministic synthetic machine-sound corpus with a known domain
//! structure.
//!
//! Every (machine, section, attribute group) owns a harmonic signature: a
//! fundamental, a spectral tilt and an amplitude-modulation rate. Even
//! sections keep the odd partials and odd sections the even ones; by
//! default that parity is the only thing separating sections, so a section
//! classifier has to learn it rather than a pitch. Target domain clips
//! shift the fundamental by a fixed number of cents and raise the noise
//! floor. Anomalies add decaying click bursts, detune the fundamental, or
//! restore the suppressed partials.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    format_clip_filename, AudioClip, ClipMetadata, Condition, DatasetError, Domain, Split,
};

/// Samples covered by one injected click burst.
pub const CLICK_LEN: usize = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct MachineProfile {
    pub name: String,
    /// Fundamental of section 0, group 0, source domain, in Hz.
    pub base_freq: f64,
}

/// Fault kinds injected into anomalous clips, written `clicks+timbre`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnomalyMode {
    /// Decaying click bursts.
    pub clicks: bool,
    /// Detuned fundamental.
    pub pitch: bool,
    /// Suppressed partials restored, blurring the section's harmonic parity.
    pub timbre: bool,
}

impl AnomalyMode {
    pub const CLICKS: Self = Self {
        clicks: true,
        pitch: false,
        timbre: false,
    };
}

impl FromStr for AnomalyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut m = AnomalyMode {
            clicks: false,
            pitch: false,
            timbre: false,
        };
        for part in s.split('+').map(str::trim) {
            match part {
                "clicks" => m.clicks = true,
                "pitch" => m.pitch = true,
                "timbre" => m.timbre = true,
                other => return Err(format!("unknown anomaly kind `{other}` (clicks, pitch, timbre)")),
            }
        }
        Ok(m)
    }
}

impl std::fmt::Display for AnomalyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = [(self.clicks, "clicks"), (self.pitch, "pitch"), (self.timbre, "timbre")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        f.write_str(&names.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub machines: Vec<MachineProfile>,
    pub sections: u32,
    /// Distinct attribute settings per section. Each setting appears in
    /// both domains, and the domain is itself an attribute, so a section
    /// holds up to twice this many attribute groups.
    pub groups_per_section: u32,
    /// Source-domain training clips per section.
    pub source_count: usize,
    /// Target-domain training clips per section.
    pub target_count: usize,
    /// Normal test clips per section and domain.
    pub test_normal: usize,
    /// Anomalous test clips per section and domain.
    pub test_anomaly: usize,
    pub sample_rate: u32,
    pub duration_secs: f64,
    /// Spacing between section fundamentals; 0 leaves parity as the only
    /// section cue.
    pub section_step_cents: f64,
    /// Spacing between group fundamentals inside a section.
    pub group_step_cents: f64,
    pub target_shift_cents: f64,
    pub source_noise: f64,
    pub target_noise: f64,
    pub anomaly_mode: AnomalyMode,
    /// Expected clicks per second in anomalous clips.
    pub click_rate: f64,
    pub click_amplitude: f64,
    /// Magnitude of the anomalous detuning; the sign is random per clip.
    pub pitch_shift_cents: f64,
    /// Level of the partials a section suppresses (odd sections keep the
    /// even partials and vice versa); 1 disables the parity signature.
    pub parity_level: f64,
    /// Level the suppressed partials return to in timbre faults.
    pub timbre_fault_level: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            machines: vec![
                MachineProfile {
                    name: "fan".into(),
                    base_freq: 180.0,
                },
                MachineProfile {
                    name: "valve".into(),
                    base_freq: 260.0,
                },
            ],
            sections: 2,
            groups_per_section: 3,
            source_count: 990,
            target_count: 10,
            test_normal: 50,
            test_anomaly: 50,
            sample_rate: 16000,
            duration_secs: 1.0,
            section_step_cents: 0.0,
            group_step_cents: 120.0,
            target_shift_cents: 60.0,
            source_noise: 0.01,
            target_noise: 0.04,
            anomaly_mode: AnomalyMode {
                clicks: true,
                pitch: false,
                timbre: true,
            },
            click_rate: 6.0,
            click_amplitude: 0.6,
            pitch_shift_cents: 150.0,
            parity_level: 0.1,
            timbre_fault_level: 1.0,
            seed: 0,
        }
    }
}

fn invalid(msg: impl Into<String>) -> DatasetError {
    DatasetError::InvalidConfig(msg.into())
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, DatasetError> {
    v.parse::<T>()
        .map_err(|_| invalid(format!("{key}: cannot parse `{v}`")))
}

/// Splits `key = value` lines, dropping blank lines and `#` comments.
pub fn parse_kv_lines(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.machines.is_empty() {
            return Err(invalid("no machines"));
        }
        for m in &self.machines {
            if m.name.is_empty() || m.name.contains(['/', '\\', ',']) {
                return Err(invalid(format!("bad machine name `{}`", m.name)));
            }
            if !(m.base_freq > 0.0) {
                return Err(invalid(format!("{}: base frequency must be positive", m.name)));
            }
        }
        if self.sections == 0 || self.groups_per_section == 0 {
            return Err(invalid("sections and groups_per_section must be positive"));
        }
        if self.target_count == 0 || self.source_count < self.target_count {
            return Err(invalid("need source_count >= target_count >= 1"));
        }
        if self.test_normal == 0 || self.test_anomaly == 0 {
            return Err(invalid("test counts must be positive"));
        }
        if self.sample_rate == 0 || !(self.duration_secs > 0.0) {
            return Err(invalid("sample_rate and duration_secs must be positive"));
        }
        if self.num_samples() == 0 {
            return Err(invalid("clip shorter than one sample"));
        }
        if self.source_noise < 0.0 || self.target_noise < 0.0 || self.click_rate < 0.0 {
            return Err(invalid("noise levels and click rate must be nonnegative"));
        }
        if !(self.parity_level >= 0.0 && self.timbre_fault_level >= 0.0) {
            return Err(invalid("partial levels must be nonnegative"));
        }
        let top = self.max_frequency();
        if top >= self.sample_rate as f64 / 2.0 {
            return Err(invalid(format!(
                "highest partial {top:.0} Hz exceeds Nyquist"
            )));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_secs * self.sample_rate as f64).round() as usize
    }

    fn max_frequency(&self) -> f64 {
        let base = self
            .machines
            .iter()
            .map(|m| m.base_freq)
            .fold(0.0, f64::max);
        let cents = (self.sections - 1) as f64 * self.section_step_cents
            + (self.groups_per_section - 1) as f64 * self.group_step_cents
            + self.target_shift_cents.abs()
            + self.pitch_shift_cents.abs()
            + 30.0;
        base * cents_ratio(cents) * NUM_HARMONICS as f64
    }

    /// Reads the flat `key = value` format; unknown keys are rejected.
    pub fn from_kv_text(text: &str) -> Result<Self, DatasetError> {
        let mut cfg = SynthConfig::default();
        for (k, v) in parse_kv_lines(text).map_err(invalid)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), DatasetError> {
        match key {
            "machines" => {
                self.machines = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .enumerate()
                    .map(|(i, item)| match item.split_once(':') {
                        Some((name, f)) => Ok(MachineProfile {
                            name: name.trim().to_string(),
                            base_freq: parse_num("machines", f.trim())?,
                        }),
                        None => Ok(MachineProfile {
                            name: item.to_string(),
                            base_freq: 180.0 * cents_ratio(700.0 * i as f64),
                        }),
                    })
                    .collect::<Result<_, _>>()?;
            }
            "sections" => self.sections = parse_num(key, v)?,
            "groups_per_section" => self.groups_per_section = parse_num(key, v)?,
            "source_count" => self.source_count = parse_num(key, v)?,
            "target_count" => self.target_count = parse_num(key, v)?,
            "test_normal" => self.test_normal = parse_num(key, v)?,
            "test_anomaly" => self.test_anomaly = parse_num(key, v)?,
            "sample_rate" => self.sample_rate = parse_num(key, v)?,
            "duration_secs" => self.duration_secs = parse_num(key, v)?,
            "section_step_cents" => self.section_step_cents = parse_num(key, v)?,
            "group_step_cents" => self.group_step_cents = parse_num(key, v)?,
            "target_shift_cents" => self.target_shift_cents = parse_num(key, v)?,
            "source_noise" => self.source_noise = parse_num(key, v)?,
            "target_noise" => self.target_noise = parse_num(key, v)?,
            "anomaly_mode" => self.anomaly_mode = v.parse().map_err(invalid)?,
            "click_rate" => self.click_rate = parse_num(key, v)?,
            "click_amplitude" => self.click_amplitude = parse_num(key, v)?,
            "pitch_shift_cents" => self.pitch_shift_cents = parse_num(key, v)?,
            "parity_level" => self.parity_level = parse_num(key, v)?,
            "timbre_fault_level" => self.timbre_fault_level = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            other => return Err(invalid(format!("unknown synth key `{other}`"))),
        }
        Ok(())
    }

    /// Renders the configuration back into the key-value format.
    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let machines: Vec<String> = self
            .machines
            .iter()
            .map(|m| format!("{}:{}", m.name, m.base_freq))
            .collect();
        let _ = writeln!(s, "machines = {}", machines.join(","));
        let _ = writeln!(s, "sections = {}", self.sections);
        let _ = writeln!(s, "groups_per_section = {}", self.groups_per_section);
        let _ = writeln!(s, "source_count = {}", self.source_count);
        let _ = writeln!(s, "target_count = {}", self.target_count);
        let _ = writeln!(s, "test_normal = {}", self.test_normal);
        let _ = writeln!(s, "test_anomaly = {}", self.test_anomaly);
        let _ = writeln!(s, "sample_rate = {}", self.sample_rate);
        let _ = writeln!(s, "duration_secs = {}", self.duration_secs);
        let _ = writeln!(s, "section_step_cents = {}", self.section_step_cents);
        let _ = writeln!(s, "group_step_cents = {}", self.group_step_cents);
        let _ = writeln!(s, "target_shift_cents = {}", self.target_shift_cents);
        let _ = writeln!(s, "source_noise = {}", self.source_noise);
        let _ = writeln!(s, "target_noise = {}", self.target_noise);
        let _ = writeln!(s, "anomaly_mode = {}", self.anomaly_mode);
        let _ = writeln!(s, "click_rate = {}", self.click_rate);
        let _ = writeln!(s, "click_amplitude = {}", self.click_amplitude);
        let _ = writeln!(s, "pitch_shift_cents = {}", self.pitch_shift_cents);
        let _ = writeln!(s, "parity_level = {}", self.parity_level);
        let _ = writeln!(s, "timbre_fault_level = {}", self.timbre_fault_level);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

const NUM_HARMONICS: usize = 6;

fn cents_ratio(cents: f64) -> f64 {
    (cents / 1200.0).exp2()
}

/// Everything needed to render one clip, independent of generation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPlan {
    /// Relative path `<machine>/<split>/<filename>`.
    pub rel_path: String,
    pub metadata: ClipMetadata,
    pub machine_index: usize,
    pub group: u32,
    pub index: usize,
    pub seed: u64,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn clip_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ p))
}

/// Attribute pairs of a synthetic clip. The domain is encoded as the `env`
/// attribute, as in recordings where domain shift comes from a changed
/// operating or recording condition.
pub fn synth_attributes(group: u32, domain: Domain) -> Vec<(String, String)> {
    vec![
        ("grp".to_string(), format!("A{group}")),
        (
            "env".to_string(),
            match domain {
                Domain::Source => "1".to_string(),
                Domain::Target => "2".to_string(),
            },
        ),
    ]
}

/// Enumerates every clip of the corpus in a fixed order.
pub fn synth_plan(config: &SynthConfig) -> Result<Vec<ClipPlan>, DatasetError> {
    config.validate()?;
    let mut plans = Vec::new();
    for (mi, machine) in config.machines.iter().enumerate() {
        for section in 0..config.sections {
            let mut push = |domain: Domain, split: Split, condition: Condition, count: usize| {
                for index in 0..count {
                    let group = (index as u32) % config.groups_per_section;
                    let metadata = ClipMetadata {
                        machine_type: machine.name.clone(),
                        section_id: section,
                        domain,
                        split,
                        condition,
                        attributes: synth_attributes(group, domain),
                    };
                    let file = format_clip_filename(&metadata, index);
                    let seed = clip_seed(
                        config.seed,
                        &[
                            mi as u64,
                            section as u64,
                            domain as u64,
                            split as u64,
                            condition as u64,
                            index as u64,
                        ],
                    );
                    plans.push(ClipPlan {
                        rel_path: format!("{}/{}/{}", machine.name, split.as_str(), file),
                        metadata,
                        machine_index: mi,
                        group,
                        index,
                        seed,
                    });
                }
            };
            push(Domain::Source, Split::Train, Condition::Normal, config.source_count);
            push(Domain::Target, Split::Train, Condition::Normal, config.target_count);
            for domain in [Domain::Source, Domain::Target] {
                push(domain, Split::Test, Condition::Normal, config.test_normal);
                push(domain, Split::Test, Condition::Anomaly, config.test_anomaly);
            }
        }
    }
    Ok(plans)
}

/// Start offsets of the click bursts an anomalous clip receives.
pub fn click_positions(config: &SynthConfig, plan: &ClipPlan) -> Vec<usize> {
    let n = config.num_samples();
    if n <= CLICK_LEN {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(plan.seed ^ 0xC11C_C11C));
    let expected = config.click_rate * config.duration_secs;
    let count = (expected.floor() as usize + usize::from(rng.gen::<f64>() < expected.fract())).max(1);
    let mut pos: Vec<usize> = (0..count).map(|_| rng.gen_range(0..n - CLICK_LEN)).collect();
    pos.sort_unstable();
    pos
}

/// Renders a clip. `anomalous` overrides the plan's condition so that a
/// normal twin of an anomalous clip can be produced from the same plan.
pub fn render_samples(config: &SynthConfig, plan: &ClipPlan, anomalous: bool) -> Vec<f32> {
    let n = config.num_samples();
    let sr = config.sample_rate as f64;
    let meta = &plan.metadata;
    let machine = &config.machines[plan.machine_index];
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);

    let g = plan.group as f64;
    let mut cents = meta.section_id as f64 * config.section_step_cents + g * config.group_step_cents;
    if meta.domain == Domain::Target {
        cents += config.target_shift_cents;
    }
    cents += rng.gen_range(-8.0..8.0);
    let mut f0 = machine.base_freq * cents_ratio(cents);
    // Group signature beyond pitch: spectral tilt and modulation rate.
    let tilt = 0.6 + 0.45 * g;
    let mod_rate = 3.0 + 4.0 * g + rng.gen_range(-0.3..0.3);
    let mod_depth = 0.35;
    let mod_phase = rng.gen_range(0.0..2.0 * PI);
    let phases: Vec<f64> = (0..NUM_HARMONICS).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let gain = 0.3 * rng.gen_range(0.9..1.1);
    let noise = match meta.domain {
        Domain::Source => config.source_noise,
        Domain::Target => config.target_noise,
    };

    let mut anomaly_rng = ChaCha8Rng::seed_from_u64(mix(plan.seed ^ 0xA0A0_5EED));
    if anomalous && config.anomaly_mode.pitch {
        let sign = if anomaly_rng.gen::<bool>() { 1.0 } else { -1.0 };
        f0 *= cents_ratio(sign * config.pitch_shift_cents);
    }

    let suppressed = if anomalous && config.anomaly_mode.timbre {
        config.timbre_fault_level
    } else {
        config.parity_level
    };
    let amps: Vec<f64> = (1..=NUM_HARMONICS)
        .map(|k| {
            let kept = (k as u32 + meta.section_id) % 2 == 1;
            (k as f64).powf(-tilt) * if kept { 1.0 } else { suppressed }
        })
        .collect();
    let norm: f64 = amps.iter().sum();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let env = 1.0 + mod_depth * (2.0 * PI * mod_rate * t + mod_phase).sin();
        let mut s = 0.0;
        for (k, (&a, &ph)) in amps.iter().zip(&phases).enumerate() {
            s += a * (2.0 * PI * (k + 1) as f64 * f0 * t + ph).sin();
        }
        let v = gain * env * s / norm + noise * standard_normal(&mut rng);
        out.push(v);
    }

    if anomalous && config.anomaly_mode.clicks {
        let mut click_rng = ChaCha8Rng::seed_from_u64(mix(plan.seed ^ 0x5151_0000));
        for p in click_positions(config, plan) {
            let sign = if click_rng.gen::<bool>() { 1.0 } else { -1.0 };
            let amp = config.click_amplitude * click_rng.gen_range(0.7..1.0) * sign;
            for j in 0..CLICK_LEN {
                let osc = if j % 2 == 0 { 1.0 } else { -0.6 };
                out[p + j] += amp * osc * (-(j as f64) / 10.0).exp();
            }
        }
    }

    out.into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect()
}

/// Standard normal draw (Box-Muller, cosine branch only).
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

pub fn render_clip(config: &SynthConfig, plan: &ClipPlan) -> AudioClip {
    let samples = render_samples(config, plan, plan.metadata.condition == Condition::Anomaly);
    AudioClip {
        id: plan.rel_path.clone(),
        samples,
        sample_rate: config.sample_rate,
        metadata: plan.metadata.clone(),
    }
}

/// Generated corpus held in memory.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub clips: Vec<AudioClip>,
    pub manifest: Vec<super::ManifestRow>,
}

pub fn synth_generate(config: &SynthConfig) -> Result<SynthCorpus, DatasetError> {
    let plans = synth_plan(config)?;
    let manifest = super::manifest_rows(plans.iter().map(|p| (p.rel_path.as_str(), &p.metadata)));
    let clips = plans.iter().map(|p| render_clip(config, p)).collect();
    Ok(SynthCorpus { clips, manifest })
}
