use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::index::sample;
use rand::Rng;

use super::{TrainingSample, ValueLabel};
use crate::error::{Error, Result};
use crate::geom::{Cell, Grid};
use crate::progress::ExplorationEmbedding;
use crate::sensor::Pose;

/// During curriculum iterations, samples from the first this-many steps of a
/// trajectory are left out.
pub const CURRICULUM_MIN_STEP: usize = 10;

const MAGIC: &[u8; 8] = b"NBPMEM\0\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct MemoryEntry {
    /// Training iteration that collected the sample (1-based).
    pub iteration: u32,
    pub sample: Arc<TrainingSample>,
}

/// Append-only store of past samples plus a held-out validation split that
/// never reaches a training batch.
#[derive(Clone, Debug, Default)]
pub struct ReplayMemory {
    entries: Vec<MemoryEntry>,
    holdout: Vec<Arc<TrainingSample>>,
}

impl ReplayMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn holdout(&self) -> &[Arc<TrainingSample>] {
        &self.holdout
    }

    /// Moves up to `count` uniformly chosen samples out of `fresh` into the
    /// holdout split. Only the first call has an effect.
    pub fn split_holdout(&mut self, fresh: &mut Vec<Arc<TrainingSample>>, count: usize, rng: &mut impl Rng) {
        if !self.holdout.is_empty() || count == 0 {
            return;
        }
        let mut picked = sample(rng, fresh.len(), count.min(fresh.len())).into_vec();
        picked.sort_unstable();
        for &i in picked.iter().rev() {
            self.holdout.push(fresh.remove(i));
        }
        self.holdout.reverse();
    }

    /// Writes the whole memory, holdout included, to a fresh record file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        write_header(&mut f)?;
        for s in &self.holdout {
            write_record(&mut f, 0, true, s)?;
        }
        for e in &self.entries {
            write_record(&mut f, e.iteration, false, &e.sample)?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut mem = Self::new();
        for (iteration, holdout, sample) in read_records(path)? {
            let sample = Arc::new(sample);
            if holdout {
                mem.holdout.push(sample);
            } else {
                mem.entries.push(MemoryEntry { iteration, sample });
            }
        }
        Ok(mem)
    }
}

/// Curriculum filter, replay mix and memory append for one iteration.
///
/// During iterations `<= curriculum_iters` samples with a step index below
/// [`CURRICULUM_MIN_STEP`] are dropped. The survivors are appended to memory
/// and returned together with a uniform sample, without replacement, of
/// `min(|survivors|, |older memory|)` older entries.
pub fn memory_update_and_batch(
    mem: &mut ReplayMemory,
    fresh: Vec<Arc<TrainingSample>>,
    iteration: u32,
    curriculum_iters: u32,
    rng: &mut impl Rng,
) -> Vec<Arc<TrainingSample>> {
    let survivors: Vec<Arc<TrainingSample>> =
        fresh.into_iter().filter(|s| iteration > curriculum_iters || s.step_index >= CURRICULUM_MIN_STEP).collect();
    let older = mem.entries.len();
    let replay = sample(rng, older, survivors.len().min(older));
    let mut batch = survivors.clone();
    batch.extend(replay.iter().map(|i| mem.entries[i].sample.clone()));
    mem.entries.extend(survivors.into_iter().map(|sample| MemoryEntry { iteration, sample }));
    batch
}

fn write_header(w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    Ok(())
}

fn encode(iteration: u32, holdout: bool, s: &TrainingSample) -> Result<Vec<u8>> {
    let e = &s.embedding;
    let mut b = Vec::new();
    b.write_u32::<LittleEndian>(iteration)?;
    b.write_u8(holdout as u8)?;
    b.write_u32::<LittleEndian>(s.step_index as u32)?;
    b.write_i32::<LittleEndian>(e.center.cell.x)?;
    b.write_i32::<LittleEndian>(e.center.cell.z)?;
    b.write_u8(e.center.yaw)?;
    b.write_u32::<LittleEndian>(e.width() as u32)?;
    b.write_u32::<LittleEndian>(e.height() as u32)?;
    b.write_u32::<LittleEndian>(e.slices.len() as u32)?;
    for g in e.slices.iter().chain(std::iter::once(&e.trajectory)) {
        for &c in g.data() {
            b.write_u16::<LittleEndian>(c)?;
        }
    }
    if s.obstacle_gt.width() != e.width() || s.obstacle_gt.height() != e.height() {
        return Err(Error::Shape("obstacle target and embedding differ in size".into()));
    }
    for &o in s.obstacle_gt.data() {
        b.write_u8(o as u8)?;
    }
    b.write_u32::<LittleEndian>(s.value_labels.len() as u32)?;
    for l in &s.value_labels {
        b.write_u16::<LittleEndian>(l.u)?;
        b.write_u16::<LittleEndian>(l.v)?;
        b.write_u8(l.yaw)?;
        b.write_f64::<LittleEndian>(l.gain)?;
    }
    Ok(b)
}

fn write_record(w: &mut impl Write, iteration: u32, holdout: bool, s: &TrainingSample) -> Result<()> {
    let payload = encode(iteration, holdout, s)?;
    w.write_u32::<LittleEndian>(payload.len() as u32)?;
    w.write_all(&payload)?;
    Ok(())
}

fn decode(mut r: &[u8]) -> Result<(u32, bool, TrainingSample)> {
    let iteration = r.read_u32::<LittleEndian>()?;
    let holdout = r.read_u8()? != 0;
    let step_index = r.read_u32::<LittleEndian>()? as usize;
    let cell = Cell::new(r.read_i32::<LittleEndian>()?, r.read_i32::<LittleEndian>()?);
    let center = Pose::new(cell, r.read_u8()?);
    let w = r.read_u32::<LittleEndian>()? as usize;
    let h = r.read_u32::<LittleEndian>()? as usize;
    let k = r.read_u32::<LittleEndian>()? as usize;
    let grid = |r: &mut &[u8]| -> Result<Grid<u16>> {
        let mut data = vec![0u16; w * h];
        r.read_u16_into::<LittleEndian>(&mut data)?;
        Ok(Grid::from_vec(w, h, data))
    };
    let slices = (0..k).map(|_| grid(&mut r)).collect::<Result<Vec<_>>>()?;
    let trajectory = grid(&mut r)?;
    let mut obstacles = vec![0u8; w * h];
    r.read_exact(&mut obstacles)?;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut value_labels = Vec::with_capacity(n);
    for _ in 0..n {
        value_labels.push(ValueLabel {
            u: r.read_u16::<LittleEndian>()?,
            v: r.read_u16::<LittleEndian>()?,
            yaw: r.read_u8()?,
            gain: r.read_f64::<LittleEndian>()?,
        });
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes in memory record".into()));
    }
    let sample = TrainingSample {
        embedding: ExplorationEmbedding { slices, trajectory, center },
        value_labels,
        obstacle_gt: Grid::from_vec(w, h, obstacles.into_iter().map(|b| b != 0).collect()),
        step_index,
    };
    Ok((iteration, holdout, sample))
}

/// Appends records to `path`, writing the header first if the file is new.
pub fn write_records<'a>(
    path: &Path,
    records: impl IntoIterator<Item = (u32, bool, &'a TrainingSample)>,
) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let mut f = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
    if fresh {
        write_header(&mut f)?;
    }
    for (iteration, holdout, s) in records {
        write_record(&mut f, iteration, holdout, s)?;
    }
    f.flush()?;
    Ok(())
}

/// Reads every `(iteration, holdout, sample)` record of a memory file.
pub fn read_records(path: &Path) -> Result<Vec<(u32, bool, TrainingSample)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Format("memory file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("not a replay memory file".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported memory version {version}")));
    }
    let mut out = Vec::new();
    loop {
        let len = match r.read_u32::<LittleEndian>() {
            Ok(n) => n as usize,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(|_| Error::Format("truncated memory record".into()))?;
        out.push(decode(&buf).map_err(|e| match e {
            Error::Io(_) => Error::Format("malformed memory record".into()),
            other => other,
        })?);
    }
    Ok(out)
}
