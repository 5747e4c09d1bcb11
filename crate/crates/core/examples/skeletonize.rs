//! Masks entities, times and numbers so that queries differing only in
//! their values share one skeleton.
use skelcache::skeleton::{skeletonize_text, substitute, EntityLexicon, PlaceholderKind};

fn main() -> skelcache::Result<()> {
    let lexicon = EntityLexicon::from_entries([
        ("apple", PlaceholderKind::Ent),
        ("huawei", PlaceholderKind::Ent),
        ("li auto", PlaceholderKind::Ent),
        ("bidding", PlaceholderKind::Val),
    ])?;
    let queries = [
        "Apple's sales from 21 to 23",
        "Li Auto's sales from 19 to 22",
        "How many orders did Huawei ship in the last 7 days",
        "ad revenue of bidding for Apple in 2024",
    ];
    for q in queries {
        let s = skeletonize_text(q, &lexicon);
        println!("{q}\n  -> {}", s.text);
        for p in &s.placeholders {
            println!("     {:>4} = {:?}", p.kind.to_string(), p.span);
        }
        // filling the slots back in gives the normalized query
        println!("  <- {}", substitute(&s.text, &s.values())?);
    }
    Ok(())
}
