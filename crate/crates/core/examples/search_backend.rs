//! Records a fixture, reads it back, and plugs in a custom backend.

use nodesmith::harvest::{fixture_file_name, EngineKind, FixtureBackend, SearchBackend, SearchHit};

/// Returns one canned hit per query; handy for wiring tests.
struct Canned;

impl SearchBackend for Canned {
    fn name(&self) -> &str {
        "canned"
    }

    fn search(&self, query: &str, kind: EngineKind) -> nodesmith::Result<Vec<SearchHit>> {
        Ok(vec![SearchHit {
            title: format!("{} result", kind.as_str()),
            url: "https://example.org".into(),
            content: format!("notes on {query}"),
        }])
    }
}

fn main() -> nodesmith::Result<()> {
    let dir = std::env::temp_dir().join(format!("nodesmith-search-{}", std::process::id()));
    let query = "tort liability for animal attacks";
    let hits = Canned.search(query, EngineKind::Scholarly)?;
    let path = FixtureBackend::record(&dir, query, EngineKind::Scholarly, &hits)?;
    println!("recorded {}", path.display());
    println!("file name is derived from the query: {}", fixture_file_name(query, EngineKind::Scholarly).display());

    let fixtures = FixtureBackend::open(&dir)?;
    println!("{} fixture(s) loaded", fixtures.len());
    for hit in fixtures.search(query, EngineKind::Scholarly)? {
        println!("  {} | {}", hit.title, hit.content);
    }
    match fixtures.search("never recorded", EngineKind::GeneralWeb) {
        Ok(h) => println!("unrecorded query gave {} hits", h.len()),
        Err(e) => println!("unrecorded query: {e}"),
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
