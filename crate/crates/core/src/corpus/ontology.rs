use std::collections::BTreeMap;
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Informable slots with their categorical values, plus the requestable slot
/// list. Slot order is significant: it fixes tracker, belief-vector and
/// heat-map column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    pub informable: InformableSlots,
    pub requestable: Vec<String>,
}

/// Ordered `slot -> values` map, serialised as a JSON object in slot order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InformableSlots(pub Vec<(String, Vec<String>)>);

impl Serialize for InformableSlots {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for InformableSlots {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = InformableSlots;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from slot to value list")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut a: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = a.next_entry::<String, Vec<String>>()? {
                    out.push((k, v));
                }
                Ok(InformableSlots(out))
            }
        }
        d.deserialize_map(V)
    }
}

pub const FOODS: &[&str] = &[
    "chinese",
    "indian",
    "italian",
    "british",
    "french",
    "thai",
    "japanese",
    "spanish",
    "korean",
    "turkish",
    "vietnamese",
    "modern european",
    "north american",
];
pub const PRICES: &[&str] = &["cheap", "moderate", "expensive"];
pub const AREAS: &[&str] = &["centre", "north", "south", "east", "west"];
pub const REQUESTABLE: &[&str] = &["address", "phone", "postcode", "food", "pricerange", "area"];

impl Ontology {
    /// The restaurant-domain ontology: food, pricerange and area are
    /// informable; address, phone, postcode and the three informables are
    /// requestable.
    pub fn restaurant() -> Self {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        Ontology {
            informable: InformableSlots(vec![
                ("food".into(), own(FOODS)),
                ("pricerange".into(), own(PRICES)),
                ("area".into(), own(AREAS)),
            ]),
            requestable: own(REQUESTABLE),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.informable.0.len() != 3 {
            return Err(Error::Config(format!(
                "expected 3 informable slots, found {}",
                self.informable.0.len()
            )));
        }
        if self.requestable.len() != 6 {
            return Err(Error::Config(format!(
                "expected 6 requestable slots, found {}",
                self.requestable.len()
            )));
        }
        for (slot, values) in &self.informable.0 {
            if values.is_empty() {
                return Err(Error::Config(format!("slot {slot} has no values")));
            }
            let mut seen = std::collections::BTreeSet::new();
            for v in values {
                if !seen.insert(v) {
                    return Err(Error::Config(format!("duplicate value {v} in slot {slot}")));
                }
                if v == "dontcare" || v == "none" {
                    return Err(Error::Config(format!("reserved value {v} in slot {slot}")));
                }
            }
        }
        Ok(())
    }

    pub fn informable_slots(&self) -> impl Iterator<Item = &str> {
        self.informable.0.iter().map(|(s, _)| s.as_str())
    }

    pub fn values(&self, slot: &str) -> Option<&[String]> {
        self.informable
            .0
            .iter()
            .find(|(s, _)| s == slot)
            .map(|(_, v)| v.as_slice())
    }

    pub fn informable_index(&self, slot: &str) -> Option<usize> {
        self.informable.0.iter().position(|(s, _)| s == slot)
    }

    pub fn requestable_index(&self, slot: &str) -> Option<usize> {
        self.requestable.iter().position(|s| s == slot)
    }

    /// Number of informable classes for a slot: values, dontcare, not-mentioned.
    pub fn class_count(&self, informable_idx: usize) -> usize {
        self.informable.0[informable_idx].1.len() + 2
    }

    /// Tracker column names: informable slots then requestable slots.
    pub fn tracker_names(&self) -> Vec<String> {
        self.informable_slots()
            .map(|s| format!("inf:{s}"))
            .chain(self.requestable.iter().map(|s| format!("req:{s}")))
            .collect()
    }

    /// Every slot that has a value token, in first-seen order.
    pub fn all_slots(&self) -> Vec<String> {
        let mut out: Vec<String> = self.informable_slots().map(String::from).collect();
        for r in &self.requestable {
            if !out.contains(r) {
                out.push(r.clone());
            }
        }
        out
    }
}

/// A venue record: a unique name and one value per slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    #[serde(flatten)]
    pub slots: BTreeMap<String, String>,
}

impl Entity {
    pub fn get(&self, slot: &str) -> Option<&str> {
        if slot == "name" {
            Some(&self.name)
        } else {
            self.slots.get(slot).map(String::as_str)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Database {
    pub entities: Vec<Entity>,
}

const NAME_FIRST: &[&str] = &[
    "golden", "lucky", "royal", "little", "old", "green", "silver", "red", "blue", "happy", "grand",
    "river",
];
const NAME_SECOND: &[&str] = &[
    "house", "star", "garden", "kitchen", "dragon", "lantern", "table", "spoon", "bistro", "oak",
    "bridge", "palace",
];
// Names that contain informable values; they exercise longest-match.
const OVERLAPPING_NAMES: &[&str] = &[
    "the chinese lantern",
    "thai orchid house",
    "little italian corner",
    "the indian palace",
    "cheap and cheerful",
    "north star diner",
];
const STREETS: &[&str] = &[
    "mill", "regent", "hills", "station", "castle", "king", "bridge", "trumpington", "newmarket",
    "chesterton", "hobson", "market",
];
const STREET_KINDS: &[&str] = &["road", "street", "lane"];

impl Database {
    /// Deterministic venue table with `size` entities.
    pub fn generate(ontology: &Ontology, size: usize, rng: &mut Rng) -> Result<Self> {
        let mut names: Vec<String> = OVERLAPPING_NAMES.iter().map(|s| s.to_string()).collect();
        let mut combos: Vec<String> = NAME_FIRST
            .iter()
            .flat_map(|a| NAME_SECOND.iter().map(move |b| format!("the {a} {b}")))
            .collect();
        rng.shuffle(&mut combos);
        names.extend(combos);
        if size > names.len() {
            return Err(Error::Config(format!("at most {} venues supported", names.len())));
        }
        names.truncate(size);

        let mut entities = Vec::with_capacity(size);
        for (i, name) in names.into_iter().enumerate() {
            let mut slots = BTreeMap::new();
            for (slot, values) in &ontology.informable.0 {
                slots.insert(slot.clone(), rng.pick(values).clone());
            }
            let street = rng.pick(STREETS);
            let kind = rng.pick(STREET_KINDS);
            slots.insert("address".into(), format!("{} {street} {kind}", 1 + rng.below(98)));
            slots.insert("phone".into(), format!("01223 {}", 300_000 + i * 7919 % 600_000));
            slots.insert(
                "postcode".into(),
                format!("cb{} {}{}", 1 + rng.below(5), 1 + rng.below(9), two_letters(rng)),
            );
            entities.push(Entity { name, slots });
        }
        Ok(Database { entities })
    }

    pub fn restaurant(ontology: &Ontology, seed: u64) -> Self {
        Database::generate(ontology, 99, &mut Rng::substream(seed, 0xdb))
            .expect("99 venues fit the name inventory")
    }

    /// Entities satisfying every constraint (`None` means unconstrained).
    pub fn query<'a>(&'a self, constraints: &[(String, Option<String>)]) -> Vec<&'a Entity> {
        self.entities
            .iter()
            .filter(|e| {
                constraints.iter().all(|(slot, v)| match v {
                    None => true,
                    Some(v) => e.get(slot) == Some(v.as_str()),
                })
            })
            .collect()
    }

    pub fn by_name(&self, name: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn validate(&self, ontology: &Ontology) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for e in &self.entities {
            if !names.insert(&e.name) {
                return Err(Error::Config(format!("duplicate venue name {}", e.name)));
            }
            for (slot, values) in &ontology.informable.0 {
                match e.slots.get(slot) {
                    Some(v) if values.contains(v) => {}
                    other => {
                        return Err(Error::Config(format!(
                            "venue {} has invalid {slot}: {other:?}",
                            e.name
                        )))
                    }
                }
            }
            for slot in &ontology.requestable {
                if e.get(slot).is_none() {
                    return Err(Error::Config(format!("venue {} lacks {slot}", e.name)));
                }
            }
        }
        Ok(())
    }
}

fn two_letters(rng: &mut Rng) -> String {
    let a = (b'a' + rng.below(26) as u8) as char;
    let b = (b'a' + rng.below(26) as u8) as char;
    format!("{a}{b}")
}
