//! On-disk interchange formats.
//!
//! Three formats move data in and out of the library:
//!
//! * **event logs** — line-delimited `user_id<TAB>unix_timestamp_seconds`
//!   (UTF-8, LF; a trailing CR per line is tolerated);
//! * **follow graphs** — line-delimited `broadcaster_id<TAB>follower_id`;
//! * **profiles** — a JSON document bundling the grid, every user's fitted
//!   intensity and attention profile, and the follow edges, so downstream
//!   commands can rebuild optimization problems without refitting.
//!
//! All readers are gzip-transparent: compression is detected from the
//! magic bytes, not the file name. Writers compress when the path ends in
//! `.gz`. Text parsers report 1-based line numbers on malformed input.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FittedProfile;
use crate::grid::{PiecewiseConstantFn, TimeGrid};
use crate::network::{Network, UserId};
use crate::optimize::{BroadcastProblem, Follower, Objective};

/// Version stamp embedded in every profiles document.
pub const PROFILES_FORMAT_VERSION: u32 = 1;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Reads a whole file, decompressing when the content is gzip.
fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut decoded = Vec::new();
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut decoded)
            .map_err(|e| Error::io(path, e))?;
        Ok(decoded)
    } else {
        Ok(raw)
    }
}

/// Writes bytes, gzip-compressing when the path ends in `.gz`.
fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let result = if path.extension().is_some_and(|e| e == "gz") {
        File::create(path).and_then(|f| {
            let mut enc = GzEncoder::new(f, Compression::default());
            enc.write_all(bytes)?;
            enc.finish().map(drop)
        })
    } else {
        std::fs::write(path, bytes)
    };
    result.map_err(|e| Error::io(path, e))
}

/// Splits decoded text into (1-based line number, line) pairs, tolerating
/// one trailing CR per line and skipping the empty tail of a final LF.
fn numbered_lines(bytes: &[u8]) -> impl Iterator<Item = (usize, Result<&str>)> {
    let mut segments: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    if segments.last().is_some_and(|s| s.is_empty()) {
        segments.pop();
    }
    segments.into_iter().enumerate().map(|(idx, mut seg)| {
        if seg.last() == Some(&b'\r') {
            seg = &seg[..seg.len() - 1];
        }
        let line = std::str::from_utf8(seg).map_err(|_| Error::Parse {
            line: idx + 1,
            message: "line is not valid UTF-8".to_string(),
        });
        (idx + 1, line)
    })
}

/// Splits one record into exactly two tab-separated fields.
fn two_fields(line: &str, number: usize) -> Result<(&str, &str)> {
    let mut parts = line.split('\t');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) => Ok((a, b)),
        _ => Err(Error::Parse {
            line: number,
            message: format!("expected exactly two tab-separated fields, got {line:?}"),
        }),
    }
}

/// Parses event-log text: one `user_id<TAB>unix_timestamp_seconds` record
/// per line. Record order is preserved.
pub fn parse_event_log_bytes(bytes: &[u8]) -> Result<Vec<(UserId, i64)>> {
    let mut records = Vec::new();
    for (number, line) in numbered_lines(bytes) {
        let line = line?;
        let (user, stamp) = two_fields(line, number)?;
        let user = UserId::new(user).map_err(|e| Error::Parse {
            line: number,
            message: e.to_string(),
        })?;
        let stamp: i64 = stamp.parse().map_err(|_| Error::Parse {
            line: number,
            message: format!("malformed timestamp {stamp:?}"),
        })?;
        records.push((user, stamp));
    }
    Ok(records)
}

/// Reads an event-log file (gzip-transparent).
pub fn read_event_log(path: &Path) -> Result<Vec<(UserId, i64)>> {
    parse_event_log_bytes(&read_bytes(path)?)
}

/// Writes an event-log file (gzip when the path ends in `.gz`).
pub fn write_event_log(path: &Path, records: &[(UserId, i64)]) -> Result<()> {
    let mut out = String::new();
    for (user, stamp) in records {
        out.push_str(user.as_str());
        out.push('\t');
        out.push_str(&stamp.to_string());
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

/// Parses follow-graph text: one `broadcaster_id<TAB>follower_id` edge per
/// line. Duplicate edges collapse; self-follows are rejected with the
/// offending line number.
pub fn parse_follow_graph_bytes(bytes: &[u8]) -> Result<Network> {
    let mut network = Network::default();
    for (number, line) in numbered_lines(bytes) {
        let line = line?;
        let (broadcaster, follower) = two_fields(line, number)?;
        let edge = UserId::new(broadcaster)
            .and_then(|b| UserId::new(follower).map(|f| (b, f)))
            .and_then(|(b, f)| network.add_edge(b, f));
        edge.map_err(|e| Error::Parse {
            line: number,
            message: e.to_string(),
        })?;
    }
    Ok(network)
}

/// Reads a follow-graph file (gzip-transparent).
pub fn read_follow_graph(path: &Path) -> Result<Network> {
    parse_follow_graph_bytes(&read_bytes(path)?)
}

/// Writes a follow-graph file in sorted edge order.
pub fn write_follow_graph(path: &Path, network: &Network) -> Result<()> {
    let mut out = String::new();
    for broadcaster in network.users() {
        for follower in network.followers(&broadcaster) {
            out.push_str(broadcaster.as_str());
            out.push('\t');
            out.push_str(follower.as_str());
            out.push('\n');
        }
    }
    write_bytes(path, out.as_bytes())
}

/// The grid header of a profiles document: period length `T` in hours and
/// piece count `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Period length in hours.
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Number of equal pieces.
    #[serde(rename = "M")]
    pub pieces: usize,
}

impl GridSpec {
    /// Converts to a validated [`TimeGrid`].
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.pieces)
    }
}

impl From<TimeGrid> for GridSpec {
    fn from(grid: TimeGrid) -> Self {
        GridSpec {
            horizon: grid.horizon(),
            pieces: grid.pieces(),
        }
    }
}

/// One user's stored fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredProfile {
    /// Posting intensity per piece (posts/hour).
    pub mu: Vec<f64>,
    /// Attention probability per piece, in `[0, 1]`.
    pub s: Vec<f64>,
    /// Whole periods observed during fitting.
    pub training_periods: u64,
    /// Mean posts per period observed during fitting.
    pub events_per_period: f64,
}

/// A profiles document: everything needed to rebuild optimization problems
/// without touching the raw logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilesFile {
    /// Schema version; must equal [`PROFILES_FORMAT_VERSION`].
    pub format_version: u32,
    /// The resolved configuration of the command that produced the file,
    /// if any. Opaque to the library.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    /// Shared time grid.
    pub grid: GridSpec,
    /// Per-user fits, keyed by user id.
    pub users: BTreeMap<UserId, StoredProfile>,
    /// Follow edges as `[broadcaster, follower]` pairs.
    pub follows: Vec<(UserId, UserId)>,
}

impl ProfilesFile {
    /// Starts an empty document on `grid`.
    pub fn new(grid: TimeGrid) -> Self {
        ProfilesFile {
            format_version: PROFILES_FORMAT_VERSION,
            config: None,
            grid: grid.into(),
            users: BTreeMap::new(),
            follows: Vec::new(),
        }
    }

    /// Stores one fitted profile.
    pub fn insert(&mut self, profile: &FittedProfile) {
        self.users.insert(
            profile.id.clone(),
            StoredProfile {
                mu: profile.intensity.values().to_vec(),
                s: profile.attention.values().to_vec(),
                training_periods: profile.training_periods,
                events_per_period: profile.events_per_period,
            },
        );
    }

    /// Records the follow edges of `network`, in sorted order.
    pub fn set_network(&mut self, network: &Network) {
        self.follows.clear();
        for broadcaster in network.users() {
            for follower in network.followers(&broadcaster) {
                self.follows.push((broadcaster.clone(), follower.clone()));
            }
        }
    }

    /// Rebuilds the follow graph.
    pub fn network(&self) -> Result<Network> {
        Network::from_edges(self.follows.iter().cloned())
    }

    /// Structural validation: version, grid, vector lengths, value ranges,
    /// and referential integrity of the edge list.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != PROFILES_FORMAT_VERSION {
            return Err(Error::InvalidFile(format!(
                "unsupported format_version {} (expected {PROFILES_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let grid = self.grid.grid().map_err(|e| {
            Error::InvalidFile(format!("bad grid header: {e}"))
        })?;
        for (user, stored) in &self.users {
            if stored.mu.len() != grid.pieces() || stored.s.len() != grid.pieces() {
                return Err(Error::InvalidFile(format!(
                    "profile for {user} has {} mu and {} s values, expected {}",
                    stored.mu.len(),
                    stored.s.len(),
                    grid.pieces()
                )));
            }
            if stored.mu.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidFile(format!(
                    "profile for {user} has a negative or non-finite intensity"
                )));
            }
            if stored.s.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                return Err(Error::InvalidFile(format!(
                    "profile for {user} has an attention value outside [0, 1]"
                )));
            }
            if !stored.events_per_period.is_finite() || stored.events_per_period < 0.0 {
                return Err(Error::InvalidFile(format!(
                    "profile for {user} has an invalid events_per_period"
                )));
            }
        }
        for (broadcaster, follower) in &self.follows {
            for user in [broadcaster, follower] {
                if !self.users.contains_key(user) {
                    return Err(Error::InvalidFile(format!(
                        "edge {broadcaster} -> {follower} references {user}, which has no profile"
                    )));
                }
            }
            if broadcaster == follower {
                return Err(Error::InvalidFile(format!(
                    "self-follow edge on {broadcaster}"
                )));
            }
        }
        Ok(())
    }

    /// The validated grid.
    pub fn time_grid(&self) -> Result<TimeGrid> {
        self.grid.grid()
    }

    /// Stored intensity of `user` as a function.
    pub fn intensity(&self, user: &UserId) -> Result<PiecewiseConstantFn> {
        let grid = self.time_grid()?;
        let stored = self
            .users
            .get(user)
            .ok_or_else(|| Error::UnknownUser(user.to_string()))?;
        PiecewiseConstantFn::new(grid, stored.mu.clone())
    }

    /// Stored attention profile of `user` as a function.
    pub fn attention(&self, user: &UserId) -> Result<PiecewiseConstantFn> {
        let grid = self.time_grid()?;
        let stored = self
            .users
            .get(user)
            .ok_or_else(|| Error::UnknownUser(user.to_string()))?;
        PiecewiseConstantFn::new(grid, stored.s.clone())
    }

    /// Assembles the optimization problem for `broadcaster` from stored
    /// fits: each follower's competing feed is the sum of its *other*
    /// followees' intensities, and the budget defaults to the
    /// broadcaster's stored mean posts per period.
    pub fn problem(
        &self,
        broadcaster: &UserId,
        k: usize,
        budget: Option<f64>,
        objective: Objective,
    ) -> Result<BroadcastProblem> {
        self.validate()?;
        let grid = self.time_grid()?;
        let network = self.network()?;
        let followers: Vec<UserId> = network.followers(broadcaster).cloned().collect();
        if followers.is_empty() {
            return Err(Error::UnknownUser(format!(
                "{broadcaster} has no followers in the profiles file"
            )));
        }
        let mut intensities: BTreeMap<UserId, PiecewiseConstantFn> = BTreeMap::new();
        for (user, stored) in &self.users {
            intensities.insert(
                user.clone(),
                PiecewiseConstantFn::new(grid, stored.mu.clone())?,
            );
        }
        let mut assembled = Vec::with_capacity(followers.len());
        for v in &followers {
            let mu = crate::network::feed_rate_excluding(&network, &intensities, broadcaster, v)?;
            let s = self.attention(v)?;
            assembled.push(Follower::new(v.clone(), mu, s)?);
        }
        let budget = match budget {
            Some(c) => c,
            None => {
                let stored = self
                    .users
                    .get(broadcaster)
                    .ok_or_else(|| Error::UnknownUser(broadcaster.to_string()))?;
                if stored.events_per_period == 0.0 {
                    return Err(Error::invalid(format!(
                        "{broadcaster} has no recorded posts; specify a budget explicitly"
                    )));
                }
                stored.events_per_period
            }
        };
        BroadcastProblem::new(grid, assembled, k, budget, objective)
    }
}

/// Parses and validates a profiles document.
pub fn parse_profiles_bytes(bytes: &[u8]) -> Result<ProfilesFile> {
    let profiles: ProfilesFile = serde_json::from_slice(bytes)?;
    profiles.validate()?;
    Ok(profiles)
}

/// Reads a profiles file (gzip-transparent).
pub fn read_profiles(path: &Path) -> Result<ProfilesFile> {
    parse_profiles_bytes(&read_bytes(path)?)
}

/// Validates and writes a profiles file as pretty-printed JSON with a
/// trailing newline (gzip when the path ends in `.gz`). Output is
/// deterministic: maps are ordered and floats format canonically.
pub fn write_profiles(path: &Path, profiles: &ProfilesFile) -> Result<()> {
    profiles.validate()?;
    let mut bytes = serde_json::to_vec_pretty(profiles)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{fit_profile, EventLog};

    fn uid(s: &str) -> UserId {
        UserId::new(s).unwrap()
    }

    fn parse_err_line(err: Error) -> usize {
        match err {
            Error::Parse { line, .. } => line,
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn event_log_text_round_trip() {
        let records = vec![(uid("alice"), 100), (uid("bob"), -5), (uid("alice"), 2000)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.tsv");
        write_event_log(&path, &records).unwrap();
        assert_eq!(read_event_log(&path).unwrap(), records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "alice\t100\nbob\t-5\nalice\t2000\n");
    }

    #[test]
    fn gzip_round_trip_and_magic_sniffing() {
        let records = vec![(uid("u"), 42)];
        let dir = tempfile::tempdir().unwrap();
        let gz = dir.path().join("events.tsv.gz");
        write_event_log(&gz, &records).unwrap();
        let raw = std::fs::read(&gz).unwrap();
        assert_eq!(&raw[..2], &GZIP_MAGIC);
        assert_eq!(read_event_log(&gz).unwrap(), records);
        // Same compressed bytes under an extension-less name still read.
        let sneaky = dir.path().join("events_without_extension");
        std::fs::write(&sneaky, &raw).unwrap();
        assert_eq!(read_event_log(&sneaky).unwrap(), records);
    }

    #[test]
    fn event_log_parse_errors_carry_line_numbers() {
        let bad_stamp = b"a\t100\nb\tnoon\n";
        assert_eq!(parse_err_line(parse_event_log_bytes(bad_stamp).unwrap_err()), 2);
        let missing_tab = b"a 100\n";
        assert_eq!(parse_err_line(parse_event_log_bytes(missing_tab).unwrap_err()), 1);
        let extra_field = b"a\t1\t2\n";
        assert_eq!(parse_err_line(parse_event_log_bytes(extra_field).unwrap_err()), 1);
        let blank_interior = b"a\t1\n\nb\t2\n";
        assert_eq!(parse_err_line(parse_event_log_bytes(blank_interior).unwrap_err()), 2);
        let bad_utf8 = b"a\t1\n\xff\xfe\t2\n";
        assert_eq!(parse_err_line(parse_event_log_bytes(bad_utf8).unwrap_err()), 2);
        let huge = b"a\t99999999999999999999999999\n";
        assert_eq!(parse_err_line(parse_event_log_bytes(huge).unwrap_err()), 1);
    }

    #[test]
    fn crlf_and_missing_final_newline_are_tolerated() {
        let crlf = b"a\t1\r\nb\t2\r\n";
        assert_eq!(parse_event_log_bytes(crlf).unwrap().len(), 2);
        let no_final = b"a\t1\nb\t2";
        assert_eq!(parse_event_log_bytes(no_final).unwrap().len(), 2);
        let empty = b"";
        assert!(parse_event_log_bytes(empty).unwrap().is_empty());
    }

    #[test]
    fn follow_graph_round_trip_and_errors() {
        let mut network = Network::default();
        network.add_edge(uid("u"), uid("v")).unwrap();
        network.add_edge(uid("u"), uid("w")).unwrap();
        network.add_edge(uid("w"), uid("v")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.tsv");
        write_follow_graph(&path, &network).unwrap();
        assert_eq!(read_follow_graph(&path).unwrap(), network);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "u\tv\nu\tw\nw\tv\n");

        // Duplicates collapse; self-follows carry the line number.
        let dup = b"u\tv\nu\tv\n";
        assert_eq!(parse_follow_graph_bytes(dup).unwrap().edge_count(), 1);
        let selfie = b"u\tv\nx\tx\n";
        assert_eq!(parse_err_line(parse_follow_graph_bytes(selfie).unwrap_err()), 2);
    }

    fn sample_profiles() -> ProfilesFile {
        let grid = TimeGrid::new(24.0, 4).unwrap();
        let mut records = Vec::new();
        for day in 0..7i64 {
            for post in 0..6i64 {
                records.push((uid("u"), day * 86_400 + post * 3600));
            }
            records.push((uid("w"), day * 86_400 + 12 * 3600));
            records.push((uid("v"), day * 86_400 + 20 * 3600));
        }
        let log = EventLog::new(records, Some((0, 7 * 86_400))).unwrap();
        let mut profiles = ProfilesFile::new(grid);
        for user in ["u", "v", "w"] {
            profiles.insert(&fit_profile(&log, &uid(user), grid).unwrap());
        }
        let mut network = Network::default();
        network.add_edge(uid("u"), uid("v")).unwrap();
        network.add_edge(uid("w"), uid("v")).unwrap();
        profiles.set_network(&network);
        profiles
    }

    #[test]
    fn profiles_round_trip_is_deterministic() {
        let profiles = sample_profiles();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        write_profiles(&a, &profiles).unwrap();
        write_profiles(&b, &profiles).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let back = read_profiles(&a).unwrap();
        assert_eq!(back, profiles);
    }

    #[test]
    fn profiles_validation_rejects_structural_problems() {
        let good = sample_profiles();

        let mut wrong_version = good.clone();
        wrong_version.format_version = 99;
        assert!(wrong_version.validate().is_err());

        let mut short_mu = good.clone();
        short_mu.users.get_mut(&uid("u")).unwrap().mu.pop();
        assert!(short_mu.validate().is_err());

        let mut bad_s = good.clone();
        bad_s.users.get_mut(&uid("v")).unwrap().s[0] = 1.5;
        assert!(bad_s.validate().is_err());

        let mut dangling_edge = good.clone();
        dangling_edge.follows.push((uid("ghost"), uid("v")));
        assert!(dangling_edge.validate().is_err());

        let mut self_edge = good.clone();
        self_edge.follows.push((uid("u"), uid("u")));
        assert!(self_edge.validate().is_err());

        let mut bad_grid = good;
        bad_grid.grid.pieces = 0;
        assert!(bad_grid.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut value = serde_json::to_value(sample_profiles()).unwrap();
        value["surprise"] = serde_json::json!(1);
        let bytes = serde_json::to_vec(&value).unwrap();
        assert!(parse_profiles_bytes(&bytes).is_err());
    }

    #[test]
    fn problem_from_profiles_matches_direct_assembly() {
        // Building from stored fits must agree with building from the log.
        let profiles = sample_profiles();
        let problem = profiles
            .problem(&uid("u"), 1, None, Objective::AverageVisibility)
            .unwrap();
        assert_eq!(problem.budget(), 6.0);
        assert_eq!(problem.followers().len(), 1);
        let follower = &problem.followers()[0];
        assert_eq!(follower.id(), &uid("v"));
        // w posts once per day at noon: 1/hour in piece 2 of the 4-piece day.
        assert_eq!(follower.mu().values(), &[0.0, 0.0, 1.0 / 6.0, 0.0]);
        // v is active daily at 20:00 -> attention 1 in the last piece.
        assert_eq!(follower.s().values(), &[0.0, 0.0, 0.0, 1.0]);

        // Unknown broadcaster and inactive-broadcaster-default errors.
        assert!(profiles
            .problem(&uid("nobody"), 1, None, Objective::AverageVisibility)
            .is_err());
        let mut inactive = profiles.clone();
        inactive.users.get_mut(&uid("u")).unwrap().events_per_period = 0.0;
        assert!(inactive
            .problem(&uid("u"), 1, None, Objective::AverageVisibility)
            .is_err());
        assert!(inactive
            .problem(&uid("u"), 1, Some(2.0), Objective::AverageVisibility)
            .is_ok());
    }

    #[test]
    fn config_field_is_preserved_verbatim() {
        let mut profiles = sample_profiles();
        profiles.config = Some(serde_json::json!({"seed": 7, "pieces": 4}));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        write_profiles(&path, &profiles).unwrap();
        let back = read_profiles(&path).unwrap();
        assert_eq!(back.config, profiles.config);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = read_event_log(Path::new("/nonexistent/events.tsv")).unwrap_err();
        assert!(err.is_io());
        let err = read_profiles(Path::new("/nonexistent/p.json")).unwrap_err();
        assert!(err.is_io());
    }
}
