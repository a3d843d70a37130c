//! Shows token-window chunking: the span arithmetic, and the chunks produced
//! for one fixture document at two window sizes.
//!
//! cargo run --example chunking

use admitrag::chunking::{chunk_document, tokenize, ChunkingParams};
use admitrag::corpus::{Document, SourceKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = ChunkingParams::default();
    for n in [0, 300, 512, 960, 2000] {
        println!("{n:>5} tokens -> {:?}", params.spans(n));
    }

    let text = std::iter::repeat("Applications close on 25 July; documents are checked within five working days.")
        .take(40)
        .collect::<Vec<_>>()
        .join(" ");
    let doc = Document::new("rules", SourceKind::Regulation, "Rules", text);
    println!("\n{} tokens in the document", tokenize(&doc.text).len());
    for (size, overlap) in [(512, 64), (128, 16)] {
        let params = ChunkingParams::new(size, overlap)?;
        println!("\nchunk_size={size} overlap={overlap}");
        for c in chunk_document(&doc, &params)? {
            println!("  {} tokens {}..{} ({} chars)", c.chunk_id, c.start_token, c.end_token, c.text.chars().count());
        }
    }
    Ok(())
}
