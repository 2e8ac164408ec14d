use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::{word_tokens, Language, TextError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Category {
    BuddhistTerm,
    Place,
    Position,
    Person,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::BuddhistTerm,
        Category::Place,
        Category::Position,
        Category::Person,
        Category::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::BuddhistTerm => "buddhist_term",
            Category::Place => "place",
            Category::Position => "position",
            Category::Person => "person",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

/// A glossary entry. `source_forms` holds the classical form first and the
/// vernacular form second when they differ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlossaryEntry {
    pub source_forms: Vec<Vec<String>>,
    pub target_form: Vec<String>,
    pub category: Category,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Glossary {
    entries: Vec<GlossaryEntry>,
}

impl Glossary {
    pub fn new(entries: Vec<GlossaryEntry>) -> Result<Self, TextError> {
        for (i, e) in entries.iter().enumerate() {
            if e.source_forms.is_empty() || e.source_forms.iter().any(Vec::is_empty) {
                return Err(TextError::BadGlossary {
                    line: i + 1,
                    reason: "empty source form".into(),
                });
            }
            if e.target_form.is_empty() {
                return Err(TextError::BadGlossary {
                    line: i + 1,
                    reason: "empty target form".into(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[GlossaryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses the tab-separated glossary format:
    /// `classical \t vernacular \t english \t category`, `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            let [classical, vernacular, english, category] = cols[..] else {
                return Err(TextError::BadGlossary {
                    line: line_no,
                    reason: format!("expected 4 tab-separated columns, found {}", cols.len()),
                });
            };
            let category = category
                .parse()
                .map_err(|reason| TextError::BadGlossary { line: line_no, reason })?;
            let mut source_forms = vec![word_tokens(classical, Language::Zh)];
            let vernacular = word_tokens(vernacular, Language::Zh);
            if !vernacular.is_empty() && vernacular != source_forms[0] {
                source_forms.push(vernacular);
            }
            let entry = GlossaryEntry {
                source_forms,
                target_form: word_tokens(english, Language::En),
                category,
            };
            if entry.source_forms[0].is_empty() || entry.target_form.is_empty() {
                return Err(TextError::BadGlossary {
                    line: line_no,
                    reason: "empty classical or English form".into(),
                });
            }
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serializes back to the tab-separated format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# classical\tvernacular\tenglish\tcategory\n");
        for e in &self.entries {
            let classical = e.source_forms[0].concat();
            let vernacular = e.source_forms.get(1).map_or(classical.clone(), |f| f.concat());
            out.push_str(&format!(
                "{classical}\t{vernacular}\t{}\t{}\n",
                e.target_form.join(" "),
                e.category
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "# comment\n须菩提\t须菩提\tSubhuti\tperson\n舍卫国\t舍卫城\tSravasti city\tplace\n\n";

    #[test]
    fn parse_sample() {
        let g = Glossary::parse(SAMPLE).unwrap();
        assert_eq!(g.len(), 2);
        let e = &g.entries()[1];
        assert_eq!(e.source_forms.len(), 2);
        assert_eq!(e.source_forms[0], ["舍", "卫", "国"]);
        assert_eq!(e.target_form, ["Sravasti", "city"]);
        assert_eq!(e.category, Category::Place);
        assert_eq!(g.entries()[0].source_forms.len(), 1);
    }

    #[test]
    fn tsv_round_trip() {
        let g = Glossary::parse(SAMPLE).unwrap();
        assert_eq!(Glossary::parse(&g.to_tsv()).unwrap(), g);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Glossary::parse("a\tb\tc\n").is_err());
        assert!(Glossary::parse("a\tb\tc\tdeity\n").is_err());
        assert!(Glossary::parse("a\tb\t \tperson\n").is_err());
    }

    #[test]
    fn rejects_empty_forms() {
        let e = GlossaryEntry {
            source_forms: vec![vec![]],
            target_form: vec!["x".into()],
            category: Category::Other,
        };
        assert!(Glossary::new(vec![e]).is_err());
    }
}
