//! Keypoint taxonomy, per-person annotations and the human skeletal graph
//! that drives the structure-aware loss.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of body keypoints (MPII convention).
pub const NUM_KEYPOINTS: usize = 16;

/// The 16 MPII body keypoints. Discriminants are the stable channel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum KeypointId {
    HeadTop = 0,
    UpperNeck = 1,
    Thorax = 2,
    Pelvis = 3,
    RShoulder = 4,
    LShoulder = 5,
    RElbow = 6,
    LElbow = 7,
    RWrist = 8,
    LWrist = 9,
    RHip = 10,
    LHip = 11,
    RKnee = 12,
    LKnee = 13,
    RAnkle = 14,
    LAnkle = 15,
}

impl KeypointId {
    pub const ALL: [KeypointId; NUM_KEYPOINTS] = [
        Self::HeadTop,
        Self::UpperNeck,
        Self::Thorax,
        Self::Pelvis,
        Self::RShoulder,
        Self::LShoulder,
        Self::RElbow,
        Self::LElbow,
        Self::RWrist,
        Self::LWrist,
        Self::RHip,
        Self::LHip,
        Self::RKnee,
        Self::LKnee,
        Self::RAnkle,
        Self::LAnkle,
    ];

    /// Limb keypoints, i.e. the ones that can be occluded without hiding the
    /// torso: elbows, wrists, knees and ankles.
    pub const LIMBS: [KeypointId; 8] = [
        Self::RElbow,
        Self::LElbow,
        Self::RWrist,
        Self::LWrist,
        Self::RKnee,
        Self::LKnee,
        Self::RAnkle,
        Self::LAnkle,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::HeadTop => "head_top",
            Self::UpperNeck => "upper_neck",
            Self::Thorax => "thorax",
            Self::Pelvis => "pelvis",
            Self::RShoulder => "r_shoulder",
            Self::LShoulder => "l_shoulder",
            Self::RElbow => "r_elbow",
            Self::LElbow => "l_elbow",
            Self::RWrist => "r_wrist",
            Self::LWrist => "l_wrist",
            Self::RHip => "r_hip",
            Self::LHip => "l_hip",
            Self::RKnee => "r_knee",
            Self::LKnee => "l_knee",
            Self::RAnkle => "r_ankle",
            Self::LAnkle => "l_ankle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Left/right counterpart; midline keypoints map to themselves.
    pub fn mirrored(self) -> Self {
        use KeypointId::*;
        match self {
            RShoulder => LShoulder,
            LShoulder => RShoulder,
            RElbow => LElbow,
            LElbow => RElbow,
            RWrist => LWrist,
            LWrist => RWrist,
            RHip => LHip,
            LHip => RHip,
            RKnee => LKnee,
            LKnee => RKnee,
            RAnkle => LAnkle,
            LAnkle => RAnkle,
            k => k,
        }
    }

    /// Table-style body-part group (Head, Shoulder, Elbow, ...).
    pub fn part(self) -> &'static str {
        use KeypointId::*;
        match self {
            HeadTop | UpperNeck => "head",
            Thorax | Pelvis => "torso",
            RShoulder | LShoulder => "shoulder",
            RElbow | LElbow => "elbow",
            RWrist | LWrist => "wrist",
            RHip | LHip => "hip",
            RKnee | LKnee => "knee",
            RAnkle | LAnkle => "ankle",
        }
    }
}

impl fmt::Display for KeypointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Visible,
    OccludedAnnotated,
    #[default]
    Unannotated,
}

/// One keypoint annotation in crop pixel coordinates (x = column, y = row).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visibility: Visibility,
}

impl Keypoint {
    pub fn visible(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            visibility: Visibility::Visible,
        }
    }

    /// True for visible and occluded-but-annotated keypoints.
    #[inline]
    pub fn is_annotated(&self) -> bool {
        self.visibility != Visibility::Unannotated
    }

    pub fn distance(&self, other: &Keypoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Exactly one annotation per [`KeypointId`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KeypointSet(pub [Keypoint; NUM_KEYPOINTS]);

impl KeypointSet {
    pub fn unannotated() -> Self {
        Self::default()
    }

    pub fn get(&self, id: KeypointId) -> &Keypoint {
        &self.0[id.index()]
    }

    pub fn get_mut(&mut self, id: KeypointId) -> &mut Keypoint {
        &mut self.0[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (KeypointId, &Keypoint)> {
        KeypointId::ALL.into_iter().zip(self.0.iter())
    }

    pub fn annotated_mask(&self) -> [bool; NUM_KEYPOINTS] {
        std::array::from_fn(|i| self.0[i].is_annotated())
    }

    pub fn num_annotated(&self) -> usize {
        self.0.iter().filter(|k| k.is_annotated()).count()
    }

    /// Applies `f` to every annotated position.
    pub fn map_positions(&self, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let mut out = *self;
        for k in out.0.iter_mut().filter(|k| k.is_annotated()) {
            (k.x, k.y) = f(k.x, k.y);
        }
        out
    }

    /// Flags annotated keypoints outside `[0, width-1] × [0, height-1]` as
    /// unannotated. Returns how many were flagged.
    pub fn clip_to_bounds(&mut self, width: usize, height: usize) -> usize {
        let mut flagged = 0;
        for k in self.0.iter_mut().filter(|k| k.is_annotated()) {
            let inside = k.x.is_finite()
                && k.y.is_finite()
                && k.x >= 0.0
                && k.y >= 0.0
                && k.x <= (width - 1) as f64
                && k.y <= (height - 1) as f64;
            if !inside {
                k.visibility = Visibility::Unannotated;
                flagged += 1;
            }
        }
        flagged
    }
}

impl Serialize for KeypointSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(NUM_KEYPOINTS))?;
        for (id, k) in self.iter() {
            map.serialize_entry(id.name(), k)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for KeypointSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = std::collections::BTreeMap::<String, Keypoint>::deserialize(d)?;
        let mut out = KeypointSet::default();
        for id in KeypointId::ALL {
            match raw.get(id.name()) {
                Some(k) => out.0[id.index()] = *k,
                None => return Err(D::Error::custom(format!("missing keypoint {}", id.name()))),
            }
        }
        if let Some(extra) = raw.keys().find(|k| KeypointId::from_name(k).is_none()) {
            return Err(D::Error::custom(format!("unknown keypoint {extra}")));
        }
        Ok(out)
    }
}

/// Human skeletal graph: undirected pair edges plus limb triplets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletalGraph {
    pub pair_edges: Vec<(KeypointId, KeypointId)>,
    #[serde(rename = "triplets")]
    pub triplet_groups: Vec<(KeypointId, KeypointId, KeypointId)>,
}

/// One broken graph invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphViolation {
    SelfLoop(KeypointId),
    DuplicateEdge(KeypointId, KeypointId),
    RepeatedTripletMember(KeypointId, KeypointId, KeypointId),
    DuplicateTriplet(KeypointId, KeypointId, KeypointId),
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SelfLoop(k) => write!(f, "self-loop on {k}"),
            Self::DuplicateEdge(a, b) => write!(f, "duplicate edge {a}-{b}"),
            Self::RepeatedTripletMember(a, b, c) => {
                write!(f, "self-loop in triplet {a}-{b}-{c}")
            }
            Self::DuplicateTriplet(a, b, c) => write!(f, "duplicate triplet {a}-{b}-{c}"),
        }
    }
}

fn undirected(a: KeypointId, b: KeypointId) -> (KeypointId, KeypointId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SkeletalGraph {
    pub fn empty() -> Self {
        Self {
            pair_edges: Vec::new(),
            triplet_groups: Vec::new(),
        }
    }

    /// Keypoints structurally connected to `k`: partners over every pair edge
    /// and every triplet containing `k`. Never contains `k` itself.
    pub fn neighbors(&self, k: KeypointId) -> Vec<KeypointId> {
        let mut mask = [false; NUM_KEYPOINTS];
        for &(a, b) in &self.pair_edges {
            if a == k {
                mask[b.index()] = true;
            }
            if b == k {
                mask[a.index()] = true;
            }
        }
        for &(a, b, c) in &self.triplet_groups {
            if [a, b, c].contains(&k) {
                for m in [a, b, c] {
                    mask[m.index()] = true;
                }
            }
        }
        mask[k.index()] = false;
        KeypointId::ALL
            .into_iter()
            .filter(|m| mask[m.index()])
            .collect()
    }

    /// Neighbour lists for every keypoint, indexed by channel.
    pub fn neighbor_table(&self) -> [Vec<KeypointId>; NUM_KEYPOINTS] {
        std::array::from_fn(|i| self.neighbors(KeypointId::ALL[i]))
    }

    pub fn validate(&self) -> Vec<GraphViolation> {
        validate_graph(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialises")
    }

    pub fn from_json(s: &str) -> crate::Result<Self> {
        let g: Self = serde_json::from_str(s)?;
        Ok(g)
    }

    /// Relabels every keypoint through `perm` (old channel → new channel).
    pub fn permuted(&self, perm: &[usize; NUM_KEYPOINTS]) -> Self {
        let p = |k: KeypointId| KeypointId::ALL[perm[k.index()]];
        Self {
            pair_edges: self.pair_edges.iter().map(|&(a, b)| (p(a), p(b))).collect(),
            triplet_groups: self
                .triplet_groups
                .iter()
                .map(|&(a, b, c)| (p(a), p(b), p(c)))
                .collect(),
        }
    }
}

impl Default for SkeletalGraph {
    fn default() -> Self {
        default_skeletal_graph()
    }
}

/// The skeleton used by default: the limb and hip connections named for the
/// structural loss, the limb triplets, and torso links that keep the graph
/// connected.
pub fn default_skeletal_graph() -> SkeletalGraph {
    use KeypointId::*;
    SkeletalGraph {
        pair_edges: vec![
            (HeadTop, UpperNeck),
            (UpperNeck, Thorax),
            (Thorax, Pelvis),
            (RShoulder, RElbow),
            (RElbow, RWrist),
            (LShoulder, LElbow),
            (LElbow, LWrist),
            (RHip, RKnee),
            (RKnee, RAnkle),
            (LHip, LKnee),
            (LKnee, LAnkle),
            (RHip, LHip),
            (Thorax, RShoulder),
            (Thorax, LShoulder),
            (Pelvis, RHip),
            (Pelvis, LHip),
        ],
        triplet_groups: vec![
            (RShoulder, RElbow, RWrist),
            (LShoulder, LElbow, LWrist),
            (RHip, RKnee, RAnkle),
            (LHip, LKnee, LAnkle),
        ],
    }
}

/// Only the six named connection families and the two triplet families,
/// without torso links.
pub fn strict_skeletal_graph() -> SkeletalGraph {
    use KeypointId::*;
    SkeletalGraph {
        pair_edges: vec![
            (HeadTop, Thorax),
            (RShoulder, RElbow),
            (LShoulder, LElbow),
            (RWrist, RElbow),
            (LWrist, LElbow),
            (RHip, RKnee),
            (LHip, LKnee),
            (RHip, LHip),
            (RKnee, RAnkle),
            (LKnee, LAnkle),
        ],
        triplet_groups: default_skeletal_graph().triplet_groups,
    }
}

/// Lists every violated graph invariant; empty means the graph is valid.
pub fn validate_graph(g: &SkeletalGraph) -> Vec<GraphViolation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for &(a, b) in &g.pair_edges {
        if a == b {
            out.push(GraphViolation::SelfLoop(a));
        } else if !seen.insert(undirected(a, b)) {
            out.push(GraphViolation::DuplicateEdge(a, b));
        }
    }
    let mut seen_triplets = HashSet::new();
    for &(a, b, c) in &g.triplet_groups {
        if a == b || b == c || a == c {
            out.push(GraphViolation::RepeatedTripletMember(a, b, c));
            continue;
        }
        // A chain read in either direction is the same triplet.
        let key = if a <= c { (a, b, c) } else { (c, b, a) };
        if !seen_triplets.insert(key) {
            out.push(GraphViolation::DuplicateTriplet(a, b, c));
        }
    }
    out
}
