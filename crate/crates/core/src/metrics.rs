//! Per-epoch training records and their CSV renderings.

use std::fmt::Write;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Accuracy on the training batches, tallied while parameters evolve.
    pub running_train_acc: f64,
    /// Accuracy on the test set with the parameters frozen at epoch end.
    pub test_acc: Option<f64>,
    pub mean_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub records: Vec<EpochRecord>,
    pub final_train_accuracy: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Metrics {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// `epoch,running_train_acc,test_acc,mean_loss`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,running_train_acc,test_acc,mean_loss\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{}",
                r.epoch,
                r.running_train_acc,
                opt(r.test_acc),
                r.mean_loss
            )
            .unwrap();
        }
        out
    }

    /// Same columns plus a trailing `model` column, for baselines.
    pub fn to_csv_with_model(&self, model: &str) -> String {
        let mut out = String::from("epoch,running_train_acc,test_acc,mean_loss,model\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch,
                r.running_train_acc,
                opt(r.test_acc),
                r.mean_loss,
                model
            )
            .unwrap();
        }
        out
    }

    /// Test accuracy against compute, measured as epochs times experts.
    pub fn compute_csv(&self, num_experts: usize) -> String {
        let mut out = String::from("compute,epoch,experts,test_acc\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{}",
                r.epoch * num_experts,
                r.epoch,
                num_experts,
                opt(r.test_acc)
            )
            .unwrap();
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("epoch,seconds\n");
        for r in &self.records {
            writeln!(out, "{},{:.3}", r.epoch, r.seconds).unwrap();
        }
        out
    }
}
