#pragma once

#include "psychic/config.hpp"
#include "psychic/dataset.hpp"
#include "psychic/error.hpp"
#include "psychic/evaluation.hpp"
#include "psychic/grounding.hpp"
#include "psychic/mangle.hpp"
#include "psychic/model_backend.hpp"
#include "psychic/pipeline.hpp"
#include "psychic/query_validator.hpp"
#include "psychic/sanitizer.hpp"
#include "psychic/sparql_client.hpp"
#include "psychic/stub_endpoint.hpp"
#include "psychic/uri.hpp"
