//! Read a UCI-style MUSK file and an svmlight-style MIL file, then write both
//! in the canonical `bag_id,label,features` CSV layout.
//!
//! cargo run --example convert_dataset

use midam::convert::{read_format, InputFormat};
use midam::data::write_csv;

const UCI: &str = "\
MUSK-188,188_1_1,46,-108,-60,1.
MUSK-188,188_1_2,41,-188,-145,1.
NON-MUSK-j146,j146_2_1,44,-117,-54,0.
";

const SVMLIGHT: &str = "\
# instance:bag:label index:value ...
0:7:1 1:0.5 3:1.25
1:7:1 2:-0.75
2:9:0 1:0.1 2:0.2 3:0.3
";

fn main() -> midam::Result<()> {
    for (name, text, format) in [("uci-musk", UCI, InputFormat::UciMusk), ("svmlight", SVMLIGHT, InputFormat::SvmLight)] {
        let ds = read_format(text.as_bytes(), format, false)?;
        println!("{name}: {} bags, {} instances, d = {}", ds.len(), ds.n_instances(), ds.dim());
        write_csv(&ds, std::io::stdout().lock(), true)?;
        println!();
    }
    Ok(())
}
