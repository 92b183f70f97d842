use std::collections::BTreeMap;
use std::path::Path;

use super::{Scene, WindowBand};
use crate::error::{Error, Result};
use crate::geom::{Cell, Grid};

const MAGIC: &str = "NBPSCENE";
const VERSION: u32 = 1;

impl Scene {
    /// Versioned text serialization: header, wall bitmap, navgrid bitmap and
    /// window-band table. Floats use the shortest exact representation, so
    /// the round trip is lossless.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{MAGIC} {VERSION}\ncell_size {}\nwall_height {}\nagent_height {}\ndims {} {}\n",
            self.cell_size,
            self.wall_height,
            self.agent_height,
            self.width(),
            self.height()
        );
        for (name, grid) in [("walls", &self.walls), ("navgrid", &self.navgrid)] {
            out.push_str(name);
            out.push('\n');
            for z in 0..self.height() {
                for x in 0..self.width() {
                    out.push(if grid.is_set(Cell::new(x as i32, z as i32)) { '1' } else { '0' });
                }
                out.push('\n');
            }
        }
        out.push_str(&format!("windows {}\n", self.windows.len()));
        for (c, b) in &self.windows {
            out.push_str(&format!("{} {} {} {}\n", c.x, c.z, b.lo, b.hi));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Scene> {
        let mut r = Reader { lines: text.lines() };
        let header: Vec<&str> = r.line()?.split_whitespace().collect();
        if header.first() != Some(&MAGIC) {
            return Err(bad("missing magic"));
        }
        if header.get(1).and_then(|v| v.parse::<u32>().ok()) != Some(VERSION) {
            return Err(bad("unsupported version"));
        }
        let cell_size = num(&r.field("cell_size")?, 0)?;
        let wall_height = num(&r.field("wall_height")?, 0)?;
        let agent_height = num(&r.field("agent_height")?, 0)?;
        let dims = r.field("dims")?;
        let (w, h) = (num(&dims, 0)? as usize, num(&dims, 1)? as usize);
        let walls = r.grid("walls", w, h)?;
        let navgrid = r.grid("navgrid", w, h)?;
        let n = num(&r.field("windows")?, 0)? as usize;
        let mut windows = BTreeMap::new();
        for _ in 0..n {
            let v: Vec<&str> = r.line()?.split_whitespace().collect();
            let cell = Cell::new(num(&v, 0)? as i32, num(&v, 1)? as i32);
            windows.insert(cell, WindowBand { lo: num(&v, 2)?, hi: num(&v, 3)? });
        }
        Scene::new(cell_size, wall_height, agent_height, walls, windows, navgrid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Scene> {
        Scene::from_text(&std::fs::read_to_string(path)?)
    }
}

fn bad(m: &str) -> Error {
    Error::Format(format!("scene file: {m}"))
}

fn num(v: &[&str], i: usize) -> Result<f64> {
    v.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad number"))
}

struct Reader<'a> {
    lines: std::str::Lines<'a>,
}

impl<'a> Reader<'a> {
    fn line(&mut self) -> Result<&'a str> {
        self.lines.next().ok_or_else(|| bad("unexpected end of file"))
    }

    fn field(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let mut parts = self.line()?.split_whitespace();
        if parts.next() != Some(key) {
            return Err(bad(&format!("expected '{key}'")));
        }
        Ok(parts.collect())
    }

    fn grid(&mut self, name: &str, w: usize, h: usize) -> Result<Grid<bool>> {
        self.field(name)?;
        let mut data = Vec::with_capacity(w * h);
        for _ in 0..h {
            let row = self.line()?;
            if row.len() != w {
                return Err(bad(&format!("{name} row has wrong width")));
            }
            for ch in row.chars() {
                match ch {
                    '1' => data.push(true),
                    '0' => data.push(false),
                    _ => return Err(bad("bitmap symbol must be 0 or 1")),
                }
            }
        }
        Ok(Grid::from_vec(w, h, data))
    }
}
