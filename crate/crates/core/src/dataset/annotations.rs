//! COCO-format annotation ingestion and per-image area indexing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u64);

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKind {
    Thing,
    Stuff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: ImageId,
    pub width: u32,
    pub height: u32,
}

impl ImageRecord {
    pub fn pixel_count(&self) -> f64 {
        f64::from(self.width) * f64::from(self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub pixel_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
    pub kind: CategoryKind,
}

/// Normalizes a category name for lookups: lowercase, with spaces and
/// underscores folded to hyphens (`"wine glass"` and `"wine-glass"` match).
pub fn normalize_name(name: &str) -> String {
    name.trim()
        .chars()
        .map(|c| match c {
            ' ' | '_' => '-',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

fn is_unlabelled(name: &str) -> bool {
    matches!(normalize_name(name).as_str(), "unlabeled" | "unlabelled")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryTable {
    entries: BTreeMap<CategoryId, Category>,
    by_name: BTreeMap<String, CategoryId>,
}

impl CategoryTable {
    /// Builds a table, dropping the "unlabelled" class and rejecting
    /// duplicate ids or names.
    pub fn new(categories: impl IntoIterator<Item = Category>) -> Result<Self> {
        let mut table = CategoryTable::default();
        for cat in categories {
            if is_unlabelled(&cat.name) {
                continue;
            }
            let key = normalize_name(&cat.name);
            if table.by_name.contains_key(&key) {
                return Err(Error::Integrity(format!(
                    "duplicate category name {:?}",
                    cat.name
                )));
            }
            if table.entries.contains_key(&cat.id) {
                return Err(Error::Integrity(format!("duplicate category id {}", cat.id)));
            }
            table.by_name.insert(key, cat.id);
            table.entries.insert(cat.id, cat);
        }
        Ok(table)
    }

    pub fn get(&self, id: CategoryId) -> Option<&Category> {
        self.entries.get(&id)
    }

    pub fn contains(&self, id: CategoryId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn name(&self, id: CategoryId) -> Option<&str> {
        self.entries.get(&id).map(|c| c.name.as_str())
    }

    pub fn by_name(&self, name: &str) -> Option<CategoryId> {
        self.by_name.get(&normalize_name(name)).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = CategoryId> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Category> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Immutable, indexed view over one annotation file.
#[derive(Debug, Clone)]
pub struct AnnotationStore {
    images: BTreeMap<ImageId, ImageRecord>,
    categories: CategoryTable,
    annotations: Vec<InstanceAnnotation>,
    // summed pixel area per (image, category)
    areas: BTreeMap<ImageId, BTreeMap<CategoryId, f64>>,
}

impl AnnotationStore {
    /// Assembles a store from already-decoded parts, enforcing the
    /// referential-integrity and geometry invariants.
    pub fn from_parts(
        images: impl IntoIterator<Item = ImageRecord>,
        categories: CategoryTable,
        annotations: impl IntoIterator<Item = InstanceAnnotation>,
    ) -> Result<Self> {
        let mut image_map = BTreeMap::new();
        for image in images {
            if image.width == 0 || image.height == 0 {
                return Err(Error::Integrity(format!(
                    "image {} has non-positive dimensions {}x{}",
                    image.id, image.width, image.height
                )));
            }
            if image_map.insert(image.id, image.clone()).is_some() {
                return Err(Error::Integrity(format!("duplicate image id {}", image.id)));
            }
        }

        let mut kept = Vec::new();
        let mut areas: BTreeMap<ImageId, BTreeMap<CategoryId, f64>> = BTreeMap::new();
        for ann in annotations {
            if !image_map.contains_key(&ann.image_id) {
                return Err(Error::Integrity(format!(
                    "annotation references unknown image {}",
                    ann.image_id
                )));
            }
            if !categories.contains(ann.category_id) {
                return Err(Error::Integrity(format!(
                    "annotation on image {} references unknown category {}",
                    ann.image_id, ann.category_id
                )));
            }
            if !(ann.pixel_area.is_finite() && ann.pixel_area >= 0.0) {
                return Err(Error::Integrity(format!(
                    "annotation on image {} has invalid area {}",
                    ann.image_id, ann.pixel_area
                )));
            }
            *areas
                .entry(ann.image_id)
                .or_default()
                .entry(ann.category_id)
                .or_insert(0.0) += ann.pixel_area;
            kept.push(ann);
        }

        Ok(AnnotationStore {
            images: image_map,
            categories,
            annotations: kept,
            areas,
        })
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageRecord> {
        self.images.values()
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageRecord> {
        self.images.get(&id)
    }

    pub fn image_ids(&self) -> Vec<ImageId> {
        self.images.keys().copied().collect()
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn categories(&self) -> &CategoryTable {
        &self.categories
    }

    pub fn annotations(&self) -> &[InstanceAnnotation] {
        &self.annotations
    }

    /// Summed annotation area of `category` in `image`, divided by the
    /// image's pixel count. Exactly 0 when the category is not annotated;
    /// not clamped to 1.
    pub fn area_fraction(&self, image: ImageId, category: CategoryId) -> Result<f64> {
        let record = self
            .images
            .get(&image)
            .ok_or_else(|| Error::Lookup(format!("unknown image {image}")))?;
        let area = self
            .areas
            .get(&image)
            .and_then(|per_cat| per_cat.get(&category))
            .copied()
            .unwrap_or(0.0);
        Ok(area / record.pixel_count())
    }

    /// Presence of a category: strictly positive area fraction.
    pub fn is_present(&self, image: ImageId, category: CategoryId) -> Result<bool> {
        Ok(self.area_fraction(image, category)? > 0.0)
    }

    /// Categories with a nonzero annotated area in `image`, paired with their
    /// area fraction.
    pub fn present_categories(&self, image: ImageId) -> Result<Vec<(CategoryId, f64)>> {
        let record = self
            .images
            .get(&image)
            .ok_or_else(|| Error::Lookup(format!("unknown image {image}")))?;
        let total = record.pixel_count();
        Ok(self
            .areas
            .get(&image)
            .map(|per_cat| {
                per_cat
                    .iter()
                    .filter(|(_, &a)| a > 0.0)
                    .map(|(&c, &a)| (c, a / total))
                    .collect()
            })
            .unwrap_or_default())
    }
}

#[derive(Deserialize)]
struct RawImage {
    id: u64,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct RawAnnotation {
    image_id: u64,
    category_id: u64,
    area: f64,
    #[serde(default)]
    #[allow(dead_code)]
    iscrowd: Option<u8>,
}

#[derive(Deserialize)]
struct RawCategory {
    id: u64,
    name: String,
    #[serde(default)]
    isthing: Option<u8>,
}

// COCO thing categories occupy ids 1..=91; COCO-Stuff stuff classes start at 92.
const FIRST_STUFF_ID: u64 = 92;

fn decode_records<T: DeserializeOwned>(doc: &Value, key: &str) -> Result<Vec<T>> {
    let items = match doc.get(key) {
        None => return Ok(Vec::new()),
        Some(Value::Array(items)) => items,
        Some(_) => {
            return Err(Error::Parse {
                record: key.to_string(),
                message: "expected an array".to_string(),
            })
        }
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            T::deserialize(item).map_err(|e| Error::Parse {
                record: format!("{key}[{i}]"),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Parses a COCO-format document. Crowd annotations are kept; their `area`
/// field counts like any other instance.
pub fn parse_annotations(text: &str) -> Result<AnnotationStore> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        record: "document".to_string(),
        message: e.to_string(),
    })?;
    if !doc.is_object() {
        return Err(Error::Parse {
            record: "document".to_string(),
            message: "top level must be an object".to_string(),
        });
    }

    let images: Vec<RawImage> = decode_records(&doc, "images")?;
    let raw_categories: Vec<RawCategory> = decode_records(&doc, "categories")?;
    let raw_annotations: Vec<RawAnnotation> = decode_records(&doc, "annotations")?;

    let excluded: BTreeSet<u64> = raw_categories
        .iter()
        .filter(|c| is_unlabelled(&c.name))
        .map(|c| c.id)
        .collect();
    let categories = CategoryTable::new(raw_categories.into_iter().map(|c| {
        let thing = match c.isthing {
            Some(flag) => flag != 0,
            None => c.id < FIRST_STUFF_ID,
        };
        Category {
            id: CategoryId(c.id),
            name: c.name,
            kind: if thing {
                CategoryKind::Thing
            } else {
                CategoryKind::Stuff
            },
        }
    }))?;

    let images = images.into_iter().map(|r| ImageRecord {
        id: ImageId(r.id),
        width: r.width,
        height: r.height,
    });
    let annotations = raw_annotations
        .into_iter()
        .filter(|a| !excluded.contains(&a.category_id))
        .map(|a| InstanceAnnotation {
            image_id: ImageId(a.image_id),
            category_id: CategoryId(a.category_id),
            pixel_area: a.area,
        });
    AnnotationStore::from_parts(images, categories, annotations)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationStore> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text)
}
