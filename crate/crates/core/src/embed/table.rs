use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::Rng;

use crate::kgstore::{EntityId, EntityKind, ObjectId, RelTag};
use crate::numkit::container::{read_f64, read_u64, read_u8};
use crate::numkit::{Mat, ParamId, ParamStore};
use crate::{Error, Result};

pub const TABLE_MAGIC: &[u8; 8] = b"GSEMBED1";

/// Raw per-object vectors with a version counter per object.
///
/// Each object owns one `1 x d` parameter in an internal [`ParamStore`], so
/// the usual gradient machinery and finite-difference checks apply directly.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    store: ParamStore,
    slots: BTreeMap<ObjectId, ParamId>,
    objects: Vec<ObjectId>,
    versions: Vec<u64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            store: ParamStore::new(),
            slots: BTreeMap::new(),
            objects: Vec::new(),
            versions: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Conventional translational-embedding init bound, `6 / sqrt(d)`.
    pub fn init_bound(&self) -> f64 {
        6.0 / (self.dim as f64).sqrt()
    }

    pub fn contains(&self, obj: ObjectId) -> bool {
        self.slots.contains_key(&obj)
    }

    pub fn insert(&mut self, obj: ObjectId, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                op: "EmbeddingTable::insert",
                left: (1, self.dim),
                right: (1, vector.len()),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite embedding for {obj}")));
        }
        if self.slots.contains_key(&obj) {
            return Err(Error::Consistency(format!("{obj} already embedded")));
        }
        let id = self.store.add(obj.to_string(), Mat::from_vec(1, self.dim, vector)?)?;
        self.slots.insert(obj, id);
        self.objects.push(obj);
        self.versions.push(0);
        Ok(())
    }

    pub fn insert_uniform<R: Rng + ?Sized>(&mut self, obj: ObjectId, rng: &mut R) -> Result<()> {
        let bound = self.init_bound();
        let v = (0..self.dim).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.insert(obj, v)
    }

    pub fn vector(&self, obj: ObjectId) -> Option<&[f64]> {
        self.slots.get(&obj).map(|&id| self.store.value(id).data())
    }

    pub fn version(&self, obj: ObjectId) -> Option<u64> {
        self.slots.get(&obj).map(|id| self.versions[id.index()])
    }

    /// Objects in insertion order.
    pub fn objects(&self) -> &[ObjectId] {
        &self.objects
    }

    pub fn slot(&self, obj: ObjectId) -> Option<ParamId> {
        self.slots.get(&obj).copied()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub(crate) fn replace_store(&mut self, store: ParamStore) {
        assert_eq!(store.len(), self.store.len());
        self.store = store;
    }

    pub fn grad_mut(&mut self, obj: ObjectId) -> Option<&mut [f64]> {
        let id = self.slots.get(&obj).copied()?;
        Some(self.store.grad_mut(id).data_mut())
    }

    pub fn zero_grads(&mut self) {
        self.store.zero_grads();
    }

    /// SGD on every object, or only on `trainable`. Versions are bumped for
    /// objects whose vector actually moved; the changed objects are returned.
    pub fn apply_sgd(&mut self, lr: f64, trainable: Option<&BTreeSet<ObjectId>>) -> Result<Vec<ObjectId>> {
        let ids: Vec<ParamId> = match trainable {
            None => self.store.ids().collect(),
            Some(set) => set.iter().filter_map(|o| self.slots.get(o).copied()).collect(),
        };
        let changed = self.store.sgd_step_subset(lr, &ids)?;
        Ok(changed
            .into_iter()
            .map(|id| {
                self.versions[id.index()] += 1;
                self.objects[id.index()]
            })
            .collect())
    }

    /// Little-endian binary: magic, u64 d, u64 count, then per object
    /// (kind byte, u64 index, d f64, u64 version).
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&(self.objects.len() as u64).to_le_bytes())?;
        for (i, obj) in self.objects.iter().enumerate() {
            let (kind, index) = object_code(*obj);
            w.write_all(&[kind])?;
            w.write_all(&(index as u64).to_le_bytes())?;
            for v in self.store.value(ParamId(i)).data() {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&self.versions[i].to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|e| Error::Format(format!("truncated embedding table: {e}")))?;
        if &magic != TABLE_MAGIC {
            return Err(Error::Format("bad embedding table magic".into()));
        }
        let dim = read_u64(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        if dim == 0 || dim > 1 << 20 {
            return Err(Error::Format(format!("implausible embedding dimension {dim}")));
        }
        let mut table = EmbeddingTable::new(dim);
        for _ in 0..count {
            let kind = read_u8(&mut r)?;
            let index = read_u64(&mut r)? as usize;
            let obj = decode_object(kind, index)?;
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                v.push(read_f64(&mut r)?);
            }
            let version = read_u64(&mut r)?;
            table.insert(obj, v)?;
            *table.versions.last_mut().expect("just inserted") = version;
        }
        Ok(table)
    }
}

fn object_code(obj: ObjectId) -> (u8, usize) {
    match obj {
        ObjectId::Entity(e) => {
            let k = match e.kind {
                EntityKind::User => 0,
                EntityKind::Poi => 1,
                EntityKind::RPoi => 2,
                EntityKind::Category => 3,
                EntityKind::Zone => 4,
            };
            (k, e.index)
        }
        ObjectId::Relation(r) => {
            let k = match r {
                RelTag::BelongTo => 16,
                RelTag::LocateAt => 17,
                RelTag::Visit => 18,
                RelTag::AlsoVisit => 19,
            };
            (k, 0)
        }
    }
}

fn decode_object(kind: u8, index: usize) -> Result<ObjectId> {
    let entity = |k| Ok(ObjectId::Entity(EntityId::new(k, index)));
    match kind {
        0 => entity(EntityKind::User),
        1 => entity(EntityKind::Poi),
        2 => entity(EntityKind::RPoi),
        3 => entity(EntityKind::Category),
        4 => entity(EntityKind::Zone),
        16 => Ok(ObjectId::Relation(RelTag::BelongTo)),
        17 => Ok(ObjectId::Relation(RelTag::LocateAt)),
        18 => Ok(ObjectId::Relation(RelTag::Visit)),
        19 => Ok(ObjectId::Relation(RelTag::AlsoVisit)),
        k => Err(Error::Format(format!("unknown object kind byte {k}"))),
    }
}
