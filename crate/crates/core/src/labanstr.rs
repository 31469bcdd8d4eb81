//! LabanSTR: note-like symbolic motion tokens.
//!
//! A [`Score`] is a meter plus a list of [`LabanToken`]s, each carrying its own
//! start and duration, so token order carries no meaning. [`canonicalize`]
//! fixes one order and [`serialize_score`] one byte form.
//!
//! Text format (UTF-8, LF):
//!
//! ```text
//! LABANSTR 1
//! meter 4/4
//! # comment
//! tok start=0/1 dur=1/1 col=arm_r dir=forward lvl=high rot=none flex=none path=none face=front pos=center_center
//! ```

use std::fmt;
use std::f64::consts::FRAC_1_SQRT_2;

use num_rational::Ratio;
use thiserror::Error;

/// Time in beats.
pub type Beat = Ratio<i64>;

macro_rules! closed_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const COUNT: usize = Self::ALL.len();

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn from_name(s: &str) -> Option<Self> {
                match s {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl serde::Serialize for $name {
            fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
                s.serialize_str(self.name())
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                $name::from_name(&text)
                    .ok_or_else(|| serde::de::Error::custom(format!("unknown {} `{text}`", stringify!($name))))
            }
        }
    };
}

closed_enum!(
    /// Staff column, one body part each.
    Column {
        SupportL => "support_l",
        SupportR => "support_r",
        LegL => "leg_l",
        LegR => "leg_r",
        Body => "body",
        ArmL => "arm_l",
        ArmR => "arm_r",
        Head => "head",
    }
);

closed_enum!(Direction {
    Place => "place",
    Forward => "forward",
    Back => "back",
    Left => "left",
    Right => "right",
    LeftForward => "left_forward",
    RightForward => "right_forward",
    LeftBack => "left_back",
    RightBack => "right_back",
});

closed_enum!(Level {
    Low => "low",
    Middle => "middle",
    High => "high",
});

closed_enum!(Rotation {
    None => "none",
    CwQuarter => "cw_quarter",
    CwHalf => "cw_half",
    CcwQuarter => "ccw_quarter",
    CcwHalf => "ccw_half",
});

closed_enum!(Flexion {
    None => "none",
    Flexed => "flexed",
    Extended => "extended",
});

closed_enum!(Path {
    None => "none",
    Straight => "straight",
    CircularCw => "circular_cw",
    CircularCcw => "circular_ccw",
});

closed_enum!(Facing {
    Front => "front",
    FrontRight => "front_right",
    Right => "right",
    BackRight => "back_right",
    Back => "back",
    BackLeft => "back_left",
    Left => "left",
    FrontLeft => "front_left",
});

closed_enum!(
    /// Stage position, depth-major.
    Position {
        UpstageLeft => "upstage_left",
        UpstageCenter => "upstage_center",
        UpstageRight => "upstage_right",
        CenterLeft => "center_left",
        CenterCenter => "center_center",
        CenterRight => "center_right",
        DownstageLeft => "downstage_left",
        DownstageCenter => "downstage_center",
        DownstageRight => "downstage_right",
    }
);

impl Direction {
    /// Horizontal offset `(dx, dy)` of the direction sign.
    pub fn offset(self) -> (f64, f64) {
        let h = FRAC_1_SQRT_2;
        match self {
            Direction::Place => (0.0, 0.0),
            Direction::Forward => (0.0, 1.0),
            Direction::Back => (0.0, -1.0),
            Direction::Left => (-1.0, 0.0),
            Direction::Right => (1.0, 0.0),
            Direction::LeftForward => (-h, h),
            Direction::RightForward => (h, h),
            Direction::LeftBack => (-h, -h),
            Direction::RightBack => (h, -h),
        }
    }
}

impl Level {
    pub fn height(self) -> f64 {
        match self {
            Level::Low => -1.0,
            Level::Middle => 0.0,
            Level::High => 1.0,
        }
    }
}

/// Kinematic target of a (direction, level) pair.
pub fn target_vector(direction: Direction, level: Level) -> [f64; 3] {
    let (dx, dy) = direction.offset();
    [dx, dy, level.height()]
}

/// Time signature. Not reduced: `4/4` and `2/2` are different meters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Meter {
    pub numerator: u32,
    pub denominator: u32,
}

impl Meter {
    pub const COMMON: Meter = Meter { numerator: 4, denominator: 4 };

    pub fn new(numerator: u32, denominator: u32) -> Option<Self> {
        (numerator > 0 && denominator > 0).then_some(Meter { numerator, denominator })
    }
}

impl Default for Meter {
    fn default() -> Self {
        Meter::COMMON
    }
}

impl fmt::Display for Meter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeAttrs {
    pub meter: Meter,
    pub start: Beat,
    pub duration: Beat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpatialAttrs {
    pub path: Path,
    pub facing: Facing,
    pub position: Position,
}

impl Default for SpatialAttrs {
    fn default() -> Self {
        SpatialAttrs { path: Path::None, facing: Facing::Front, position: Position::CenterCenter }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActionAttrs {
    pub column: Column,
    pub direction: Direction,
    pub level: Level,
    pub rotation: Rotation,
    pub flexion: Flexion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabanToken {
    pub time: TimeAttrs,
    pub spatial: SpatialAttrs,
    pub action: ActionAttrs,
}

impl LabanToken {
    /// Token with neutral rotation, flexion and spatial attributes.
    pub fn simple(
        meter: Meter,
        start: Beat,
        duration: Beat,
        column: Column,
        direction: Direction,
        level: Level,
    ) -> Self {
        LabanToken {
            time: TimeAttrs { meter, start, duration },
            spatial: SpatialAttrs::default(),
            action: ActionAttrs { column, direction, level, rotation: Rotation::None, flexion: Flexion::None },
        }
    }

    pub fn end(&self) -> Beat {
        self.time.start + self.time.duration
    }

    pub fn cell(&self) -> Cell {
        Cell { column: self.action.column, direction: self.action.direction, level: self.action.level }
    }

    fn canonical_key(&self) -> impl Ord {
        let a = &self.action;
        let s = &self.spatial;
        (
            self.time.start,
            a.column,
            self.time.duration,
            a.direction,
            a.level,
            a.rotation,
            a.flexion,
            (s.path, s.facing, s.position),
            self.time.meter,
        )
    }
}

/// One (column, direction, level) cell of the 8×9×3 action grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct Cell {
    pub column: Column,
    pub direction: Direction,
    pub level: Level,
}

impl Cell {
    pub const COUNT: usize = Column::COUNT * Direction::COUNT * Level::COUNT;

    pub fn index(self) -> usize {
        (self.column.index() * Direction::COUNT + self.direction.index()) * Level::COUNT + self.level.index()
    }

    pub fn from_index(i: usize) -> Option<Cell> {
        if i >= Self::COUNT {
            return None;
        }
        let level = Level::from_index(i % Level::COUNT)?;
        let rest = i / Level::COUNT;
        let direction = Direction::from_index(rest % Direction::COUNT)?;
        let column = Column::from_index(rest / Direction::COUNT)?;
        Some(Cell { column, direction, level })
    }

    pub fn all() -> impl Iterator<Item = Cell> {
        (0..Self::COUNT).filter_map(Cell::from_index)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.column, self.direction, self.level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Score {
    pub meter: Meter,
    pub tokens: Vec<LabanToken>,
}

impl Score {
    pub fn new(meter: Meter) -> Self {
        Score { meter, tokens: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// End of the last token, or zero.
    pub fn horizon(&self) -> Beat {
        self.tokens.iter().map(LabanToken::end).max().unwrap_or_else(|| Beat::from_integer(0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownEnum { field: &'static str, value: String },
    MalformedRational { field: &'static str, value: String },
    VersionMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(reason) => write!(f, "syntax error: {reason}"),
            ParseErrorKind::UnknownEnum { field, value } => write!(f, "unknown value `{value}` for `{field}`"),
            ParseErrorKind::MalformedRational { field, value } => {
                write!(f, "malformed rational `{value}` for `{field}`")
            }
            ParseErrorKind::VersionMismatch(v) => write!(f, "unsupported LABANSTR version `{v}`"),
        }
    }
}

const HEADER: &str = "LABANSTR 1";
const TOKEN_KEYS: [&str; 10] = ["start", "dur", "col", "dir", "lvl", "rot", "flex", "path", "face", "pos"];

fn syntax(line: usize, column: usize, reason: impl Into<String>) -> ParseError {
    ParseError { line, column, kind: ParseErrorKind::Syntax(reason.into()) }
}

fn parse_rational(field: &'static str, value: &str, line: usize, column: usize) -> Result<Beat, ParseError> {
    let malformed = || ParseError {
        line,
        column,
        kind: ParseErrorKind::MalformedRational { field, value: value.to_string() },
    };
    let (num, den) = value.split_once('/').ok_or_else(malformed)?;
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let num_digits = num.strip_prefix('-').unwrap_or(num);
    if !digits(num_digits) || !digits(den) {
        return Err(malformed());
    }
    let n: i64 = num.parse().map_err(|_| malformed())?;
    let d: i64 = den.parse().map_err(|_| malformed())?;
    if d == 0 {
        return Err(malformed());
    }
    Ok(Beat::new(n, d))
}

fn parse_enum<T>(
    field: &'static str,
    value: &str,
    line: usize,
    column: usize,
    from_name: fn(&str) -> Option<T>,
) -> Result<T, ParseError> {
    from_name(value).ok_or_else(|| ParseError {
        line,
        column,
        kind: ParseErrorKind::UnknownEnum { field, value: value.to_string() },
    })
}

fn parse_meter(text: &str, line: usize) -> Result<Meter, ParseError> {
    let rest = text
        .strip_prefix("meter ")
        .ok_or_else(|| syntax(line, 1, "expected `meter <num>/<den>`"))?;
    let bad = || syntax(line, 7, format!("bad meter `{rest}`"));
    let (n, d) = rest.split_once('/').ok_or_else(bad)?;
    let n: u32 = n.parse().map_err(|_| bad())?;
    let d: u32 = d.parse().map_err(|_| bad())?;
    Meter::new(n, d).ok_or_else(bad)
}

fn parse_token(text: &str, line: usize, meter: Meter) -> Result<LabanToken, ParseError> {
    let rest = text.strip_prefix("tok ").ok_or_else(|| syntax(line, 1, "expected `tok`"))?;
    let mut values: [&str; 10] = [""; 10];
    let mut columns = [0usize; 10];
    let mut col = 5; // 1-based column of the first field
    let mut fields = rest.split(' ');
    for (i, key) in TOKEN_KEYS.iter().enumerate() {
        let field = fields
            .next()
            .ok_or_else(|| syntax(line, col, format!("missing field `{key}`")))?;
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| syntax(line, col, format!("expected `{key}=<value>`, found `{field}`")))?;
        if k != *key {
            return Err(syntax(line, col, format!("expected key `{key}`, found `{k}`")));
        }
        values[i] = v;
        columns[i] = col + k.len() + 1;
        col += field.len() + 1;
    }
    if let Some(extra) = fields.next() {
        return Err(syntax(line, col, format!("unexpected trailing field `{extra}`")));
    }
    let start = parse_rational("start", values[0], line, columns[0])?;
    let duration = parse_rational("dur", values[1], line, columns[1])?;
    Ok(LabanToken {
        time: TimeAttrs { meter, start, duration },
        action: ActionAttrs {
            column: parse_enum("col", values[2], line, columns[2], Column::from_name)?,
            direction: parse_enum("dir", values[3], line, columns[3], Direction::from_name)?,
            level: parse_enum("lvl", values[4], line, columns[4], Level::from_name)?,
            rotation: parse_enum("rot", values[5], line, columns[5], Rotation::from_name)?,
            flexion: parse_enum("flex", values[6], line, columns[6], Flexion::from_name)?,
        },
        spatial: SpatialAttrs {
            path: parse_enum("path", values[7], line, columns[7], Path::from_name)?,
            facing: parse_enum("face", values[8], line, columns[8], Facing::from_name)?,
            position: parse_enum("pos", values[9], line, columns[9], Position::from_name)?,
        },
    })
}

/// Parses score text. Token order is preserved; overlaps are not checked.
pub fn parse_score(text: &str) -> Result<Score, ParseError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut lines = body.split('\n').enumerate().map(|(i, l)| (i + 1, l));
    for (line, l) in body.split('\n').enumerate() {
        if l.ends_with('\r') {
            return Err(syntax(line + 1, l.len(), "CR line ending"));
        }
    }
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((line, l)) => {
            return Err(match l.strip_prefix("LABANSTR ") {
                Some(v) => ParseError { line, column: 10, kind: ParseErrorKind::VersionMismatch(v.to_string()) },
                None => syntax(line, 1, "missing `LABANSTR 1` header"),
            })
        }
        None => unreachable!("split yields at least one item"),
    }
    let mut meter = None;
    let mut tokens = Vec::new();
    let mut last_line = 1;
    for (line, l) in lines {
        last_line = line;
        if l.starts_with('#') {
            continue;
        }
        if l.is_empty() {
            return Err(syntax(line, 1, "blank line"));
        }
        match meter {
            None => meter = Some(parse_meter(l, line)?),
            Some(m) => tokens.push(parse_token(l, line, m)?),
        }
    }
    let meter = meter.ok_or_else(|| syntax(last_line + 1, 1, "missing `meter` line"))?;
    Ok(Score { meter, tokens })
}

fn write_rational(out: &mut String, r: &Beat) {
    use fmt::Write as _;
    let _ = write!(out, "{}/{}", r.numer(), r.denom());
}

fn write_token(out: &mut String, t: &LabanToken) {
    use fmt::Write as _;
    out.push_str("tok start=");
    write_rational(out, &t.time.start);
    out.push_str(" dur=");
    write_rational(out, &t.time.duration);
    let a = &t.action;
    let s = &t.spatial;
    let _ = writeln!(
        out,
        " col={} dir={} lvl={} rot={} flex={} path={} face={} pos={}",
        a.column, a.direction, a.level, a.rotation, a.flexion, s.path, s.facing, s.position
    );
}

/// Canonical text: header, meter, then tokens in canonical order.
pub fn serialize_score(s: &Score) -> String {
    let canonical = canonicalize(s);
    let mut out = format!("{HEADER}\nmeter {}\n", canonical.meter);
    for t in &canonical.tokens {
        write_token(&mut out, t);
    }
    out
}

pub fn canonicalize(s: &Score) -> Score {
    let mut tokens = s.tokens.clone();
    tokens.sort_by(|a, b| a.canonical_key().cmp(&b.canonical_key()));
    Score { meter: s.meter, tokens }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Two tokens in one column whose half-open intervals intersect.
    /// Indices refer to the score's token list, `first < second`.
    Overlap { column: Column, first: usize, second: usize },
    NonPositiveDuration { index: usize },
    NegativeStart { index: usize },
    MeterMismatch { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Overlap { column, first, second } => {
                write!(f, "tokens #{first} and #{second} overlap in column {column}")
            }
            Violation::NonPositiveDuration { index } => write!(f, "token #{index} has a nonpositive duration"),
            Violation::NegativeStart { index } => write!(f, "token #{index} starts before beat 0"),
            Violation::MeterMismatch { index } => write!(f, "token #{index} does not share the score meter"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every violation. Overlap pairs are found with a per-column sweep.
pub fn validate_score(s: &Score) -> ValidationReport {
    let zero = Beat::from_integer(0);
    let mut violations = Vec::new();
    for (index, t) in s.tokens.iter().enumerate() {
        if t.time.duration <= zero {
            violations.push(Violation::NonPositiveDuration { index });
        }
        if t.time.start < zero {
            violations.push(Violation::NegativeStart { index });
        }
        if t.time.meter != s.meter {
            violations.push(Violation::MeterMismatch { index });
        }
    }
    let mut overlaps = Vec::new();
    for column in Column::ALL {
        let mut lane: Vec<usize> = (0..s.tokens.len())
            .filter(|&i| s.tokens[i].action.column == *column && s.tokens[i].time.duration > zero)
            .collect();
        lane.sort_by_key(|&i| (s.tokens[i].time.start, i));
        for (pos, &i) in lane.iter().enumerate() {
            let end = s.tokens[i].end();
            for &j in lane[pos + 1..].iter().take_while(|&&j| s.tokens[j].time.start < end) {
                overlaps.push(Violation::Overlap { column: *column, first: i.min(j), second: i.max(j) });
            }
        }
    }
    overlaps.sort_by_key(|v| match v {
        Violation::Overlap { first, second, .. } => (*first, *second),
        _ => unreachable!(),
    });
    violations.extend(overlaps);
    ValidationReport { violations }
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("score is invalid ({} violations)", .0.violations.len())]
    InvalidScore(ValidationReport),
    #[error("sample rate must be at least 1")]
    SampleRate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    start: f64,
    end: f64,
    from: [f64; 3],
    to: [f64; 3],
}

/// Piecewise-linear trajectory of one column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelTrack {
    segments: Vec<Segment>,
}

impl ChannelTrack {
    pub fn value_at(&self, t: f64) -> [f64; 3] {
        let idx = self.segments.partition_point(|s| s.start <= t);
        if idx == 0 {
            return [0.0; 3];
        }
        let s = &self.segments[idx - 1];
        if t >= s.end {
            return s.to;
        }
        let u = (t - s.start) / (s.end - s.start);
        std::array::from_fn(|k| s.from[k] + (s.to[k] - s.from[k]) * u)
    }
}

/// Per-column trajectories sampled at `k / sample_rate` beats.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedChannels {
    pub sample_rate: u32,
    pub tracks: Vec<ChannelTrack>,
    /// `samples[column][k]` is the value at beat `k / sample_rate`.
    pub samples: Vec<Vec<[f64; 3]>>,
}

impl DecodedChannels {
    pub fn track(&self, column: Column) -> &ChannelTrack {
        &self.tracks[column.index()]
    }

    pub fn column(&self, column: Column) -> &[[f64; 3]] {
        &self.samples[column.index()]
    }

    /// One coordinate of one column as a scalar series.
    pub fn scalar_channel(&self, column: Column, axis: usize) -> Vec<f64> {
        self.column(column).iter().map(|v| v[axis]).collect()
    }
}

fn beat_to_f64(b: &Beat) -> f64 {
    *b.numer() as f64 / *b.denom() as f64
}

/// Decodes a valid score into per-column piecewise-linear trajectories.
///
/// Each token moves its column from the value held at its start to the
/// token's target vector over `[start, start + duration)` and holds it
/// afterwards. Columns rest at the origin. Rotation and flexion are inert.
pub fn decode_channels(s: &Score, sample_rate: u32) -> Result<DecodedChannels, DecodeError> {
    if sample_rate < 1 {
        return Err(DecodeError::SampleRate);
    }
    let report = validate_score(s);
    if !report.is_ok() {
        return Err(DecodeError::InvalidScore(report));
    }
    let mut tracks = vec![ChannelTrack::default(); Column::COUNT];
    let mut lanes: Vec<Vec<&LabanToken>> = vec![Vec::new(); Column::COUNT];
    for t in &s.tokens {
        lanes[t.action.column.index()].push(t);
    }
    for (lane, track) in lanes.iter_mut().zip(tracks.iter_mut()) {
        lane.sort_by_key(|t| t.time.start);
        let mut held = [0.0; 3];
        for t in lane.iter() {
            let to = target_vector(t.action.direction, t.action.level);
            track.segments.push(Segment {
                start: beat_to_f64(&t.time.start),
                end: beat_to_f64(&t.end()),
                from: held,
                to,
            });
            held = to;
        }
    }
    let horizon = s.horizon() * Beat::from_integer(i64::from(sample_rate));
    let count = horizon.ceil().to_integer() as usize + 1;
    let samples = tracks
        .iter()
        .map(|track| (0..count).map(|k| track.value_at(k as f64 / f64::from(sample_rate))).collect())
        .collect();
    Ok(DecodedChannels { sample_rate, tracks, samples })
}

/// Normalized counts over the 216 (column, direction, level) cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub cells: Vec<f64>,
    pub empty: bool,
}

impl Histogram {
    pub fn mass(&self, cell: Cell) -> f64 {
        self.cells[cell.index()]
    }

    /// Total-variation distance, half the L1 distance.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self.cells.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

pub fn attribute_histogram(s: &Score) -> Histogram {
    let mut cells = vec![0.0; Cell::COUNT];
    if s.tokens.is_empty() {
        return Histogram { cells, empty: true };
    }
    for t in &s.tokens {
        cells[t.cell().index()] += 1.0;
    }
    let n = s.tokens.len() as f64;
    cells.iter_mut().for_each(|c| *c /= n);
    Histogram { cells, empty: false }
}
