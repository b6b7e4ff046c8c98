//! Word lists the mock backend and synthetic seeds draw from.

use std::fs;
use std::io;
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pub cs_topics: Vec<String>,
    pub social_topics: Vec<String>,
    pub expertises: Vec<String>,
    pub genres: Vec<String>,
    pub first_names: Vec<String>,
    pub last_names: Vec<String>,
    pub institutions: Vec<String>,
    pub countries: Vec<String>,
    pub jobs: Vec<String>,
}

const FILES: [&str; 9] = [
    "topics_cs.txt",
    "topics_social.txt",
    "expertises.txt",
    "genres.txt",
    "first_names.txt",
    "last_names.txt",
    "institutions.txt",
    "countries.txt",
    "jobs.txt",
];

fn lines(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
}

impl Vocabulary {
    pub fn builtin() -> Self {
        Vocabulary {
            cs_topics: lines(include_str!("../data/vocab/topics_cs.txt")),
            social_topics: lines(include_str!("../data/vocab/topics_social.txt")),
            expertises: lines(include_str!("../data/vocab/expertises.txt")),
            genres: lines(include_str!("../data/vocab/genres.txt")),
            first_names: lines(include_str!("../data/vocab/first_names.txt")),
            last_names: lines(include_str!("../data/vocab/last_names.txt")),
            institutions: lines(include_str!("../data/vocab/institutions.txt")),
            countries: lines(include_str!("../data/vocab/countries.txt")),
            jobs: lines(include_str!("../data/vocab/jobs.txt")),
        }
    }

    /// Loads a directory of one-token-per-line files; missing files fall back
    /// to the built-in lists.
    pub fn load(dir: &Path) -> io::Result<Self> {
        let mut vocab = Vocabulary::builtin();
        for (file, slot) in FILES.iter().zip(vocab.slots_mut()) {
            let path = dir.join(file);
            if path.exists() {
                let words = lines(&fs::read_to_string(&path)?);
                if words.is_empty() {
                    return Err(io::Error::new(io::ErrorKind::InvalidData, format!("{} is empty", path.display())));
                }
                *slot = words;
            }
        }
        Ok(vocab)
    }

    fn slots_mut(&mut self) -> [&mut Vec<String>; 9] {
        [
            &mut self.cs_topics,
            &mut self.social_topics,
            &mut self.expertises,
            &mut self.genres,
            &mut self.first_names,
            &mut self.last_names,
            &mut self.institutions,
            &mut self.countries,
            &mut self.jobs,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_lists_are_populated() {
        let mut v = Vocabulary::builtin();
        assert!(v.cs_topics.contains(&"AI".to_string()));
        assert_eq!(v.institutions.len(), v.countries.len());
        assert!(v.slots_mut().iter().all(|s| !s.is_empty()));
    }

    #[test]
    fn load_overrides_present_files_only() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("genres.txt"), "Noir\n\nOpera\n").unwrap();
        let v = Vocabulary::load(dir.path()).unwrap();
        assert_eq!(v.genres, ["Noir", "Opera"]);
        assert_eq!(v.jobs, Vocabulary::builtin().jobs);
    }
}
