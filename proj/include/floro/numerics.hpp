#pragma once

#include <floro/grad_check.hpp>
#include <floro/ops.hpp>
#include <floro/tensor.hpp>
