//! Safety lexicon directories: `abusive.txt`, `profanity.txt`,
//! `personal_info.txt`.

use std::fs;
use std::path::Path;

use care_core::safety::{Lexicon, LexiconList, SafetyError};

use crate::error::{CareError, Result};

pub fn load_lexicon(dir: impl AsRef<Path>) -> Result<Lexicon> {
    let dir = dir.as_ref();
    let mut sources = Vec::with_capacity(3);
    for list in LexiconList::ALL {
        let path = dir.join(list.file_name());
        let text = fs::read_to_string(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CareError::Safety(SafetyError::LexiconMissing(path.display().to_string()))
            } else {
                CareError::io(&path, e)
            }
        })?;
        sources.push(text);
    }
    Ok(Lexicon::parse(&sources[0], &sources[1], &sources[2])?)
}

pub fn write_lexicon(dir: impl AsRef<Path>, lexicon: &Lexicon) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| CareError::io(dir, e))?;
    for list in LexiconList::ALL {
        let path = dir.join(list.file_name());
        fs::write(&path, lexicon.source(list)).map_err(|e| CareError::io(&path, e))?;
    }
    Ok(())
}
