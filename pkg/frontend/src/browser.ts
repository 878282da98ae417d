import { ApiClient } from "./api.js";
import { startApp } from "./main.js";

startApp(document, new ApiClient(""), window.localStorage);
