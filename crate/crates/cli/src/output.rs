use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Every JSON output is wrapped with the schema version and command name.
#[derive(Serialize)]
struct Envelope<'a, T> {
    schema_version: u32,
    command: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes all files of one command once everything is computed. Each file
/// goes to a temporary sibling first and is renamed into place.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: Option<&Path>) -> Self {
        Outputs {
            dir: dir
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from(".")),
            files: Vec::new(),
        }
    }

    pub fn json<T: Serialize>(
        &mut self,
        name: &str,
        command: &str,
        body: &T,
    ) -> Result<(), CliError> {
        let env = Envelope {
            schema_version: riskctl_core::SCHEMA_VERSION,
            command,
            body,
        };
        let mut text = serde_json::to_vec_pretty(&env).map_err(riskctl_core::Error::from)?;
        text.push(b'\n');
        self.files.push((name.to_string(), text));
        Ok(())
    }

    pub fn raw(&mut self, name: &str, body: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), body.into()));
    }

    pub fn write(self) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(&self.dir)?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let target = self.dir.join(&name);
            let tmp = self.dir.join(format!(".{name}.tmp"));
            {
                let mut f = fs::File::create(&tmp)?;
                f.write_all(&bytes)?;
                f.sync_all()?;
            }
            fs::rename(&tmp, &target)?;
            written.push(target);
        }
        Ok(written)
    }
}
