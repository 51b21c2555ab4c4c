// Scratch probe: real encoder block records for the depth step block.
use gto::{encode_image, EncoderConfig, GrayImage, Mode};

fn main() {
    let pixels: Vec<u8> = (0..256).map(|i| if i % 16 >= 8 { 255u8 } else { 0u8 }).collect();
    let img = GrayImage::new(16, 16, pixels).unwrap();
    let cfg = EncoderConfig::new(Mode::Depth, 10.0);
    let enc = encode_image(&img, &cfg).unwrap();
    for b in &enc.stats.blocks {
        println!(
            "class={} converged={} use_gft={} delta={:?} bits={:.0} graph_bits={:.0} dct_bits={:.0} D={:.1} rc={:.1} rg={:.2}",
            b.class, b.converged, b.use_gft, b.delta_index, b.bits, b.graph_bits, b.dct_bits,
            b.distortion, b.rc_theory, b.rg_theory
        );
    }
    println!("stream bytes = {}", enc.bitstream.len());
}
