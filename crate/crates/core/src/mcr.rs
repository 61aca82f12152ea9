//! Canonical per-primitive instructions and object-centric label masking.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::McrError;
use crate::model::{PrimitiveSequence, PrimitiveType};

/// The shipped canonical table, kept as JSON so it can be audited directly.
pub const MCR_TABLE_JSON: &str = include_str!("../resources/mcr_table.json");

/// Color slot of a canonical template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ColorSlot {
    #[serde(rename = "color_1")]
    Color1,
    #[serde(rename = "color_2")]
    Color2,
}

impl ColorSlot {
    pub fn name(self) -> &'static str {
        match self {
            ColorSlot::Color1 => "color_1",
            ColorSlot::Color2 => "color_2",
        }
    }
}

impl fmt::Display for ColorSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Slot -> object identifier.
pub type RoleMap = BTreeMap<ColorSlot, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CanonicalInstruction {
    pub text: String,
    pub primitive: PrimitiveType,
    /// Only the slots referenced by the template are kept.
    pub roles: RoleMap,
}

#[derive(Debug, Clone, Deserialize)]
struct TableFile {
    version: u32,
    templates: Vec<TableRow>,
}

#[derive(Debug, Clone, Deserialize)]
struct TableRow {
    primitive: PrimitiveType,
    text: String,
}

/// Parsed canonical table: one template per primitive.
#[derive(Debug, Clone)]
pub struct McrTable {
    pub version: u32,
    rows: BTreeMap<PrimitiveType, String>,
}

impl McrTable {
    pub fn from_json(json: &str) -> Result<Self, McrError> {
        let file: TableFile = serde_json::from_str(json).map_err(|e| McrError::Table(e.to_string()))?;
        let mut rows = BTreeMap::new();
        for row in file.templates {
            if rows.insert(row.primitive, row.text).is_some() {
                return Err(McrError::Table(format!("duplicate row for {}", row.primitive)));
            }
        }
        if let Some(missing) = PrimitiveType::ALL.iter().find(|p| !rows.contains_key(p)) {
            return Err(McrError::Table(format!("no row for {missing}")));
        }
        Ok(Self {
            version: file.version,
            rows,
        })
    }

    /// The table compiled into the crate.
    pub fn builtin() -> &'static McrTable {
        static TABLE: OnceLock<McrTable> = OnceLock::new();
        TABLE.get_or_init(|| McrTable::from_json(MCR_TABLE_JSON).expect("bundled MCR table is well formed"))
    }

    pub fn text(&self, primitive: PrimitiveType) -> &str {
        &self.rows[&primitive]
    }

    /// Slots the template for `primitive` refers to, in slot order.
    pub fn slots(&self, primitive: PrimitiveType) -> Vec<ColorSlot> {
        let text = self.text(primitive);
        [ColorSlot::Color1, ColorSlot::Color2]
            .into_iter()
            .filter(|s| text.contains(s.name()))
            .collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = (PrimitiveType, &str)> {
        self.rows.iter().map(|(p, t)| (*p, t.as_str()))
    }
}

/// Canonical instruction for `primitive` using the built-in table.
pub fn canonicalize(primitive: PrimitiveType, roles: &RoleMap) -> Result<CanonicalInstruction, McrError> {
    let table = McrTable::builtin();
    let mut bound = RoleMap::new();
    for slot in table.slots(primitive) {
        let object = roles
            .get(&slot)
            .ok_or_else(|| McrError::MissingRole(slot.name().to_string()))?;
        bound.insert(slot, object.clone());
    }
    Ok(CanonicalInstruction {
        text: table.text(primitive).to_string(),
        primitive,
        roles: bound,
    })
}

/// One interaction episode: the manipulated object and, optionally, where it goes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectPair {
    pub manipulated: String,
    pub target: Option<String>,
}

impl ObjectPair {
    pub fn new(manipulated: impl Into<String>, target: Option<&str>) -> Self {
        Self {
            manipulated: manipulated.into(),
            target: target.map(str::to_string),
        }
    }

    /// Generic names used when a corpus carries no object annotations.
    pub fn placeholder(index: usize) -> Self {
        Self {
            manipulated: format!("object_{}", index + 1),
            target: Some(format!("target_{}", index + 1)),
        }
    }

    /// Label ids reserved for this pair in synthetic grids: `2i+1`, `2i+2`.
    pub fn labels(index: usize) -> (u8, u8) {
        let base = (2 * index + 1).min(u8::MAX as usize - 1) as u8;
        (base, base + 1)
    }
}

/// Which slot a primitive binds, and to which member of its pair.
fn binding(primitive: PrimitiveType) -> Option<ColorSlot> {
    use PrimitiveType::*;
    match primitive {
        Grasp | Lift | Push | Pull | Insert | Rotate | Tilt => Some(ColorSlot::Color1),
        Move | Place | Press => Some(ColorSlot::Color2),
        Twist => None,
    }
}

fn is_opener(primitive: PrimitiveType) -> bool {
    matches!(
        primitive,
        PrimitiveType::Grasp | PrimitiveType::Push | PrimitiveType::Pull
    )
}

/// Pair index used by each segment of `seq`.
///
/// An opener (grasp, push, pull) starts a new episode when the current one
/// already contains an opener. A numeric suffix (`grasp_2`) pins the pair
/// explicitly, 1-based.
pub fn episode_indices(seq: &PrimitiveSequence) -> Vec<usize> {
    let mut out = Vec::with_capacity(seq.len());
    let mut pair = 0usize;
    let mut opened = false;
    for item in seq.items() {
        if let Some(n) = item.suffix_index().filter(|n| *n >= 1) {
            if n - 1 != pair {
                opened = false;
            }
            pair = n - 1;
        } else if is_opener(item.primitive) && opened {
            pair += 1;
            opened = false;
        }
        if is_opener(item.primitive) {
            opened = true;
        }
        out.push(pair);
    }
    out
}

/// Per-segment role maps for `seq` given the ordered episode pairs.
pub fn assign_roles(seq: &PrimitiveSequence, objects: &[ObjectPair]) -> Result<Vec<RoleMap>, McrError> {
    let episodes = episode_indices(seq);
    seq.items()
        .iter()
        .zip(episodes)
        .enumerate()
        .map(|(segment, (item, pair_index))| {
            let pair = objects.get(pair_index).ok_or(McrError::InsufficientObjects {
                segment,
                pair: pair_index,
            })?;
            let mut roles = RoleMap::new();
            match binding(item.primitive) {
                Some(ColorSlot::Color1) => {
                    roles.insert(ColorSlot::Color1, pair.manipulated.clone());
                }
                Some(ColorSlot::Color2) => {
                    if let Some(target) = &pair.target {
                        roles.insert(ColorSlot::Color2, target.clone());
                    }
                }
                None => {}
            }
            Ok(roles)
        })
        .collect()
}

/// Per-cell object ids (0 = background), row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    width: usize,
    height: usize,
    max_objects: u8,
    labels: Vec<u8>,
}

impl LabelGrid {
    pub fn new(width: usize, height: usize, max_objects: u8, labels: Vec<u8>) -> Result<Self, McrError> {
        if labels.len() != width * height {
            return Err(McrError::ShapeMismatch(format!(
                "{} labels for a {width}x{height} grid",
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l > max_objects) {
            return Err(McrError::LabelOutOfRange { label, max_objects });
        }
        Ok(Self {
            width,
            height,
            max_objects,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn max_objects(&self) -> u8 {
        self.max_objects
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Distinct non-background labels present.
    pub fn present(&self) -> BTreeSet<u8> {
        self.labels.iter().copied().filter(|&l| l != 0).collect()
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self, McrError> {
        let labels = crop_cells(&self.labels, self.width, self.height, x, y, w, h)?;
        Ok(Self {
            width: w,
            height: h,
            max_objects: self.max_objects,
            labels,
        })
    }

    pub fn to_rle(&self) -> RleGrid {
        let rows = self
            .labels
            .chunks(self.width.max(1))
            .take(self.height)
            .map(|row| {
                let mut runs: Vec<[u32; 2]> = Vec::new();
                for &l in row {
                    match runs.last_mut() {
                        Some(run) if run[0] == l as u32 => run[1] += 1,
                        _ => runs.push([l as u32, 1]),
                    }
                }
                runs
            })
            .collect();
        RleGrid {
            width: self.width,
            height: self.height,
            max_objects: self.max_objects,
            rows,
        }
    }

    pub fn from_rle(rle: &RleGrid) -> Result<Self, McrError> {
        if rle.rows.len() != rle.height {
            return Err(McrError::ShapeMismatch(format!(
                "{} rows declared, {} present",
                rle.height,
                rle.rows.len()
            )));
        }
        let mut labels = Vec::with_capacity(rle.width * rle.height);
        for (y, row) in rle.rows.iter().enumerate() {
            let start = labels.len();
            for &[label, count] in row {
                let label = u8::try_from(label).map_err(|_| McrError::LabelOutOfRange {
                    label: u8::MAX,
                    max_objects: rle.max_objects,
                })?;
                labels.extend(std::iter::repeat_n(label, count as usize));
            }
            if labels.len() - start != rle.width {
                return Err(McrError::ShapeMismatch(format!(
                    "row {y} expands to {} cells, expected {}",
                    labels.len() - start,
                    rle.width
                )));
            }
        }
        Self::new(rle.width, rle.height, rle.max_objects, labels)
    }
}

/// Run-length encoded label grid as stored in trajectory files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleGrid {
    pub width: usize,
    pub height: usize,
    pub max_objects: u8,
    /// Per row, `[label, run_length]` pairs.
    pub rows: Vec<Vec<[u32; 2]>>,
}

/// Numeric observation grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ObsGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, McrError> {
        if values.len() != width * height {
            return Err(McrError::ShapeMismatch(format!(
                "{} values for a {width}x{height} grid",
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self, McrError> {
        let values = crop_cells(&self.values, self.width, self.height, x, y, w, h)?;
        Ok(Self {
            width: w,
            height: h,
            values,
        })
    }
}

fn crop_cells<T: Copy>(
    cells: &[T],
    width: usize,
    height: usize,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> Result<Vec<T>, McrError> {
    if x + w > width || y + h > height {
        return Err(McrError::ShapeMismatch(format!(
            "crop {w}x{h}+{x}+{y} exceeds {width}x{height}"
        )));
    }
    Ok((y..y + h)
        .flat_map(|row| cells[row * width + x..row * width + x + w].iter().copied())
        .collect())
}

/// Keeps observation cells whose label is in `keep`, zeroing the rest.
pub fn apply_mask(grid: &LabelGrid, keep: &BTreeSet<u8>, obs: &ObsGrid) -> Result<ObsGrid, McrError> {
    if grid.width != obs.width || grid.height != obs.height {
        return Err(McrError::ShapeMismatch(format!(
            "labels {}x{} vs observation {}x{}",
            grid.width, grid.height, obs.width, obs.height
        )));
    }
    let values = grid
        .labels
        .iter()
        .zip(&obs.values)
        .map(|(l, v)| if keep.contains(l) { *v } else { 0.0 })
        .collect();
    Ok(ObsGrid {
        width: obs.width,
        height: obs.height,
        values,
    })
}
