//! Solve results cached by model-file content hash.

use std::fs;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use viab_core::dp::{solve, ArgmaxPolicy, ValueFunction};
use viab_core::{io, Model};

pub struct SolveCache {
    dir: Option<PathBuf>,
}

impl SolveCache {
    pub fn new(dir: Option<PathBuf>, enabled: bool) -> Self {
        let dir = enabled.then(|| {
            dir.or_else(|| std::env::var_os("VIAB_CACHE_DIR").map(PathBuf::from))
                .unwrap_or_else(|| std::env::temp_dir().join("viab-cache"))
        });
        Self { dir }
    }

    fn paths(&self, model_bytes: &[u8]) -> Option<(PathBuf, PathBuf)> {
        let dir = self.dir.as_ref()?;
        let key = hex::encode(Sha256::digest(model_bytes));
        Some((
            dir.join(format!("{key}.value.csv")),
            dir.join(format!("{key}.argmax.csv")),
        ))
    }

    fn load(&self, model: &Model, model_bytes: &[u8]) -> Option<(ValueFunction, ArgmaxPolicy)> {
        let (value_path, argmax_path) = self.paths(model_bytes)?;
        let table = io::read_value_csv(fs::File::open(value_path).ok()?).ok()?;
        let argmax = io::read_argmax_csv(fs::File::open(argmax_path).ok()?, model).ok()?;
        let vf = table.valuefn;
        let fits = vf.t0() == model.t0()
            && vf.horizon() == model.horizon()
            && vf.width() == model.n_states() + 1;
        fits.then_some((vf, argmax))
    }

    fn store(&self, model: &Model, model_bytes: &[u8], vf: &ValueFunction, argmax: &ArgmaxPolicy) {
        let Some((value_path, argmax_path)) = self.paths(model_bytes) else {
            return;
        };
        let write = || -> viab_core::Result<()> {
            fs::create_dir_all(value_path.parent().expect("cache file has a parent"))?;
            io::write_value_csv(fs::File::create(&value_path)?, model, vf)?;
            io::write_argmax_csv(fs::File::create(&argmax_path)?, model, argmax)?;
            Ok(())
        };
        // a cache that cannot be written only costs a re-solve next time
        if write().is_err() {
            let _ = fs::remove_file(&value_path);
        }
    }

    pub fn solve(
        &self,
        model: &Model,
        model_bytes: &[u8],
    ) -> viab_core::Result<(ValueFunction, ArgmaxPolicy)> {
        if let Some(hit) = self.load(model, model_bytes) {
            return Ok(hit);
        }
        let (vf, argmax) = solve(model)?;
        self.store(model, model_bytes, &vf, &argmax);
        Ok((vf, argmax))
    }
}
