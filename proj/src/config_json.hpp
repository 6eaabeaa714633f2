#pragma once

#include "intercnn/data.hpp"
#include "intercnn/model.hpp"
#include "json_util.hpp"

namespace icnn::detail {

void apply_model_json(ModelConfig& c, const json& j);
void apply_data_json(DataConfig& c, const json& j);
json data_json(const DataConfig& c);

}  // namespace icnn::detail
