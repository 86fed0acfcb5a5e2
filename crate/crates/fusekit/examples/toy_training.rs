//! Train the fusion unit end to end on the synthetic max-fusion task: the
//! target is the elementwise maximum of the two modality tensors, so neither
//! input alone suffices.

use fusekit::config::ModuleConfig;
use fusekit::train::{train_toy, ToyTask};

fn main() -> Result<(), fusekit::Error> {
    let task = ToyTask::default_task(0);
    let config = ModuleConfig::with_defaults(task.channels);
    let outcome = train_toy(&task, &config, 200, 1e-2, 0)?;

    for (epoch, loss) in outcome.losses.iter().enumerate() {
        if epoch % 20 == 0 || epoch + 1 == outcome.losses.len() {
            let bar = "#".repeat((loss / outcome.losses[0] * 50.0) as usize);
            println!("epoch {epoch:>3}  loss {loss:.5}  {bar}");
        }
    }
    println!(
        "loss ratio {:.3} after {} epochs ({} weight tensors trained)",
        outcome.losses.last().unwrap() / outcome.losses[0],
        outcome.losses.len(),
        outcome.archive.len()
    );
    Ok(())
}
