//! Regenerates the bundled toy knowledge graph under `data/toy/`.
//!
//! Four groups of five entities (a hub and four members) with three
//! relations: `member_of` (member to its hub), `same_group` (ordered pairs
//! inside a group) and `next` (member k of group g to member k of group
//! g+1, hubs in a ring). One `member_of` triple per group goes to valid and
//! one to test.
//!
//! Usage: `cargo run --example toy_data -- <out-dir>`

use std::fs;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GROUPS: usize = 4;
const MEMBERS: usize = 4;

fn name(g: usize, k: usize) -> String {
    if k == 0 {
        format!("g{g}_hub")
    } else {
        format!("g{g}_m{k}")
    }
}

fn main() -> std::io::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "data/toy".into()).into();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for g in 0..GROUPS {
        let mut members: Vec<usize> = (1..=MEMBERS).collect();
        members.shuffle(&mut rng);
        for (i, &k) in members.iter().enumerate() {
            let t = (name(g, k), "member_of", name(g, 0));
            match i {
                0 => valid.push(t),
                1 => test.push(t),
                _ => train.push(t),
            }
        }
        for a in 0..=MEMBERS {
            for b in 0..=MEMBERS {
                if a != b {
                    train.push((name(g, a), "same_group", name(g, b)));
                }
            }
        }
        for k in 0..=MEMBERS {
            train.push((name(g, k), "next", name((g + 1) % GROUPS, k)));
        }
    }
    train.shuffle(&mut rng);
    fs::create_dir_all(&out)?;
    for (file, rows) in [("train.txt", &train), ("valid.txt", &valid), ("test.txt", &test)] {
        let body: String = rows.iter().map(|(h, r, t)| format!("{h}\t{r}\t{t}\n")).collect();
        fs::write(out.join(file), body)?;
    }
    println!("{} train, {} valid, {} test triples in {}", train.len(), valid.len(), test.len(), out.display());
    Ok(())
}
