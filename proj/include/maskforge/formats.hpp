#pragma once

#include <string>
#include <vector>

#include "maskforge/tensor.hpp"

namespace maskforge {

struct MetricsRow {
    int run_id = 0;
    int epoch = 0;
    double lambda = 0.0;
    double tau = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double task_loss = 0.0;
    double mask_q = 0.0;
    bool lambda_stepped = false;
    double seconds = 0.0;
};

// Column order is fixed: run_id,epoch,lambda,tau,train_acc,test_acc,
// task_loss,mask_q,lambda_stepped,seconds. Doubles are shortest-round-trip,
// '.' decimal separator, '\n' line endings.
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);
std::vector<MetricsRow> parse_metrics_csv(const std::string& path);

std::string format_double(double v);  // shortest round-trip via to_chars

// Binary P5 graymap, maxval 255. Rows = first tensor axis, cols = second.
void write_pgm(const std::string& path, int rows, int cols,
               const std::vector<unsigned char>& pixels);
std::pair<std::pair<int, int>, std::vector<unsigned char>> read_pgm(const std::string& path);

// Renders a binary keep-indicator as graymaps (0 = dropped, 255 = kept).
// Channel masks [1,1,k] become one 1xk strip at <stem>.pgm; spatial masks
// [w,h,k] become one w x h image per channel at <stem>_c<i>.pgm (or a single
// <stem>.pgm when k == 1). Returns the written paths.
std::vector<std::string> write_mask_pgm(const TensorPtr& keep, const std::string& stem);

}  // namespace maskforge
